//! Classifier abstraction, a k-NN reference classifier, analytic oracle
//! classifiers with exactly computable misclassification regions, and a
//! subprocess adapter for external models.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, LabelRule, LabeledDataset, Metric};
use crate::error::ClassifierError;

/// A deterministic classifier over [0,1]^d: the same input always yields
/// the same class id.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &[f64]) -> ClassId;
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
}

/// Fraction of dataset points the classifier gets wrong.
pub fn test_error(c: &dyn Classifier, ds: &LabeledDataset) -> f64 {
    let wrong = ds.iter().filter(|(p, y)| c.predict(p) != *y).count();
    wrong as f64 / ds.n() as f64
}

/// Majority-vote k-nearest-neighbor classifier. Neighbors are ordered by
/// (distance, index) and vote ties break to the smallest class id, so
/// prediction is fully deterministic.
pub struct KnnClassifier {
    name: String,
    k: usize,
    metric: Metric,
    ds: LabeledDataset,
}

/// Build a k-NN classifier over the dataset.
pub fn train_knn(
    ds: &LabeledDataset,
    k: usize,
    metric: Metric,
) -> Result<KnnClassifier, ClassifierError> {
    if k == 0 || k > ds.n() {
        return Err(ClassifierError::InvalidK { k, n: ds.n() });
    }
    Ok(KnnClassifier {
        name: format!("knn{k}"),
        k,
        metric,
        ds: ds.clone(),
    })
}

impl Classifier for KnnClassifier {
    fn predict(&self, x: &[f64]) -> ClassId {
        let mut dists: Vec<(f64, usize)> = (0..self.ds.n())
            .map(|i| (self.metric.distance(x, self.ds.point(i)), i))
            .collect();
        dists.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts: std::collections::BTreeMap<ClassId, usize> = Default::default();
        for &(_, i) in dists.iter().take(self.k) {
            *counts.entry(self.ds.label(i)).or_insert(0) += 1;
        }
        // BTreeMap iterates labels ascending, so a strict > keeps the
        // smallest class id on ties.
        let mut best = (0usize, 0 as ClassId);
        for (&label, &count) in &counts {
            if count > best.0 {
                best = (count, label);
            }
        }
        best.1
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.ds.dim()
    }
}

/// A closed-form region of [0,1]^d whose intersection volume with any
/// axis-aligned box is exactly computable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    Empty,
    /// Axis-aligned box [lo, hi) per axis.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Union of pairwise-disjoint parts; disjointness is the caller's
    /// contract so volumes add.
    Union { parts: Vec<Region> },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Empty => false,
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &h))| v >= l && v < h),
            Region::Union { parts } => parts.iter().any(|p| p.contains(x)),
        }
    }

    /// Volume of the intersection with box [lo, hi).
    pub fn volume_in_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Region::Empty => 0.0,
            Region::Box { lo: rl, hi: rh } => {
                let mut v = 1.0;
                for i in 0..lo.len() {
                    let overlap = (hi[i].min(rh[i]) - lo[i].max(rl[i])).max(0.0);
                    v *= overlap;
                }
                v
            }
            Region::Union { parts } => parts.iter().map(|p| p.volume_in_box(lo, hi)).sum(),
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), ClassifierError> {
        match self {
            Region::Empty => Ok(()),
            Region::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(ClassifierError::InvalidOracle(format!(
                        "region box dimension {} != {d}",
                        lo.len()
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(ClassifierError::InvalidOracle(
                        "region box has lo > hi".into(),
                    ));
                }
                Ok(())
            }
            Region::Union { parts } => parts.iter().try_for_each(|p| p.check_dim(d)),
        }
    }
}

/// Ground-truth rule of an oracle classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TruthRule {
    Halfplane { normal: Vec<f64>, offset: f64 },
    /// Label 1 inside the region, 0 outside.
    InRegion { region: Region },
    Constant { label: ClassId },
}

impl TruthRule {
    pub fn label(&self, x: &[f64]) -> ClassId {
        match self {
            TruthRule::Halfplane { normal, offset } => LabelRule::Halfplane {
                normal: normal.clone(),
                offset: *offset,
            }
            .label(x),
            TruthRule::InRegion { region } => {
                if region.contains(x) {
                    1
                } else {
                    0
                }
            }
            TruthRule::Constant { label } => *label,
        }
    }
}

/// A classifier with a closed-form decision rule: it reproduces the ground
/// truth everywhere except inside `flip`, where it outputs the next class
/// id mod `n_classes`. The misclassification region is therefore exactly
/// `flip`, which makes misclassified volume fractions analytic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleClassifier {
    pub name: String,
    pub d: usize,
    #[serde(default = "default_n_classes")]
    pub n_classes: ClassId,
    pub truth: TruthRule,
    pub flip: Region,
}

fn default_n_classes() -> ClassId {
    2
}

impl OracleClassifier {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        truth: TruthRule,
        flip: Region,
    ) -> Result<Self, ClassifierError> {
        let oracle = OracleClassifier {
            name: name.into(),
            d,
            n_classes: 2,
            truth,
            flip,
        };
        oracle.flip.check_dim(d)?;
        Ok(oracle)
    }

    pub fn ground_truth(&self, x: &[f64]) -> ClassId {
        self.truth.label(x)
    }

    /// Exact volume of the misclassification region inside box [lo, hi).
    pub fn misclass_volume_in_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.flip.volume_in_box(lo, hi)
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let oracle: OracleClassifier = serde_json::from_str(text)
            .map_err(|e| ClassifierError::InvalidOracle(format!("json: {e}")))?;
        oracle.flip.check_dim(oracle.d)?;
        Ok(oracle)
    }
}

impl Classifier for OracleClassifier {
    fn predict(&self, x: &[f64]) -> ClassId {
        let truth = self.truth.label(x);
        if self.flip.contains(x) {
            (truth + 1) % self.n_classes
        } else {
            truth
        }
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.d
    }
}

/// Wraps an external model behind a line protocol: the child reads one
/// input per line as d comma-separated floats on stdin and must answer
/// with one integer class id per line on stdout.
///
/// The child is expected to be stateless per line; a broken pipe or a
/// non-integer answer aborts the run with a panic carrying the protocol
/// context, since no meaningful estimate can be produced from a half-dead
/// model.
pub struct SubprocessClassifier {
    name: String,
    d: usize,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    child: Mutex<Child>,
}

impl SubprocessClassifier {
    /// Spawn `program args...` and probe it with a single origin query so
    /// configuration errors surface before a long run.
    pub fn spawn(program: &str, args: &[String], d: usize) -> Result<Self, ClassifierError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| ClassifierError::Subprocess(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let clf = SubprocessClassifier {
            name: format!("cmd:{program}"),
            d,
            io: Mutex::new((stdin, stdout)),
            child: Mutex::new(child),
        };
        clf.query(&vec![0.0; d])
            .map_err(|e| ClassifierError::Subprocess(format!("probe failed: {e}")))?;
        Ok(clf)
    }

    fn query(&self, x: &[f64]) -> Result<ClassId, String> {
        let mut io = self.io.lock().expect("classifier io lock");
        let line: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        writeln!(io.0, "{}", line.join(",")).map_err(|e| format!("write: {e}"))?;
        io.0.flush().map_err(|e| format!("flush: {e}"))?;
        let mut answer = String::new();
        let read = io.1.read_line(&mut answer).map_err(|e| format!("read: {e}"))?;
        if read == 0 {
            return Err("child closed stdout".into());
        }
        answer
            .trim()
            .parse::<ClassId>()
            .map_err(|_| format!("child answered {answer:?}, expected an integer class id"))
    }
}

impl Classifier for SubprocessClassifier {
    fn predict(&self, x: &[f64]) -> ClassId {
        match self.query(x) {
            Ok(label) => label,
            Err(e) => panic!("subprocess classifier {}: {e}", self.name),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.d
    }
}

impl Drop for SubprocessClassifier {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, StreamDomain};
    use rand::Rng;

    fn tiny_ds() -> LabeledDataset {
        // Two A points near the origin, one B point at the far corner.
        LabeledDataset::new(2, vec![0.1, 0.1, 0.2, 0.1, 0.9, 0.9], vec![0, 0, 1]).unwrap()
    }

    #[test]
    fn knn_k1_returns_training_label() {
        let c = train_knn(&tiny_ds(), 1, Metric::Linf).unwrap();
        assert_eq!(c.predict(&[0.9, 0.9]), 1);
        assert_eq!(c.predict(&[0.1, 0.1]), 0);
    }

    #[test]
    fn knn_majority_wins() {
        let c = train_knn(&tiny_ds(), 3, Metric::Linf).unwrap();
        assert_eq!(c.predict(&[0.5, 0.5]), 0);
    }

    #[test]
    fn knn_vote_tie_breaks_to_smaller_class() {
        let ds = LabeledDataset::new(1, vec![0.4, 0.6], vec![1, 0]).unwrap();
        let c = train_knn(&ds, 2, Metric::Linf).unwrap();
        assert_eq!(c.predict(&[0.5]), 0);
    }

    #[test]
    fn knn_rejects_bad_k() {
        assert!(matches!(
            train_knn(&tiny_ds(), 0, Metric::Linf),
            Err(ClassifierError::InvalidK { .. })
        ));
        assert!(matches!(
            train_knn(&tiny_ds(), 4, Metric::Linf),
            Err(ClassifierError::InvalidK { .. })
        ));
    }

    #[test]
    fn test_error_of_truth_rule_is_zero() {
        let ds = tiny_ds();
        let oracle = OracleClassifier::new(
            "exact",
            2,
            TruthRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
            Region::Empty,
        )
        .unwrap();
        assert_eq!(test_error(&oracle, &ds), 0.0);
    }

    #[test]
    fn test_error_of_constant_on_balanced_set_is_half() {
        let ds = LabeledDataset::new(1, vec![0.1, 0.9], vec![0, 1]).unwrap();
        let oracle = OracleClassifier::new(
            "const",
            1,
            TruthRule::Constant { label: 0 },
            Region::Empty,
        )
        .unwrap();
        assert_eq!(test_error(&oracle, &ds), 0.5);
    }

    #[test]
    fn oracle_flips_inside_region_only() {
        let oracle = OracleClassifier::new(
            "flip",
            2,
            TruthRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
            Region::Box {
                lo: vec![0.0, 0.0],
                hi: vec![0.1, 0.1],
            },
        )
        .unwrap();
        assert_eq!(oracle.predict(&[0.05, 0.05]), 1); // truth 0, flipped
        assert_eq!(oracle.predict(&[0.3, 0.3]), 0);
        assert_eq!(oracle.predict(&[0.7, 0.7]), 1);
        assert_eq!(oracle.ground_truth(&[0.05, 0.05]), 0);
    }

    #[test]
    fn oracle_volume_agrees_with_monte_carlo() {
        let oracle = OracleClassifier::new(
            "vol",
            2,
            TruthRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
            Region::Union {
                parts: vec![
                    Region::Box {
                        lo: vec![0.1, 0.1],
                        hi: vec![0.3, 0.4],
                    },
                    Region::Box {
                        lo: vec![0.6, 0.6],
                        hi: vec![0.7, 0.9],
                    },
                ],
            },
        )
        .unwrap();
        let lo = [0.0, 0.0];
        let hi = [1.0, 1.0];
        let exact = oracle.misclass_volume_in_box(&lo, &hi);
        let n = 200_000;
        let mut rng = derive_rng(12, StreamDomain::CellRobustness, 0);
        let mut hits = 0u64;
        for _ in 0..n {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            if oracle.predict(&x) != oracle.ground_truth(&x) {
                hits += 1;
            }
        }
        let est = hits as f64 / n as f64;
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (est - exact).abs() < 3.0 * sigma + 1e-9,
            "mc {est} vs exact {exact}"
        );
    }

    #[test]
    fn subprocess_adapter_round_trips() {
        let clf = SubprocessClassifier::spawn(
            "awk",
            &["-F,".to_string(), "{ if ($1 < 0.5) print 0; else print 1; fflush() }".to_string()],
            2,
        )
        .unwrap();
        assert_eq!(clf.predict(&[0.2, 0.9]), 0);
        assert_eq!(clf.predict(&[0.7, 0.1]), 1);
        assert_eq!(clf.dim(), 2);
    }
}
