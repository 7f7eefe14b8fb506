//! Labeled datasets on the unit hypercube, r-separation estimation,
//! synthetic data generation and CSV I/O.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::DataError;
use crate::rng::{derive_rng, StreamDomain};

/// Dense class identifier starting at 0.
pub type ClassId = u32;

/// Distance used for r-separation, partitioning and k-NN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Chebyshev distance; the default throughout the toolkit.
    #[default]
    Linf,
    L2,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Linf => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Metric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Points in [0,1]^d with class labels.
///
/// Points are stored row-major (n x d). Construction validates the domain
/// bounds, so downstream code can rely on every coordinate lying in [0,1]
/// and on n >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    points: Vec<f64>,
    labels: Vec<ClassId>,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(d: usize, points: Vec<f64>, labels: Vec<ClassId>) -> Result<Self, DataError> {
        if d == 0 || points.is_empty() || labels.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if points.len() != labels.len() * d {
            return Err(DataError::LengthMismatch {
                points: points.len() / d.max(1),
                labels: labels.len(),
            });
        }
        for (i, chunk) in points.chunks_exact(d).enumerate() {
            for (axis, &v) in chunk.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(DataError::CoordinateOutOfRange {
                        index: i,
                        axis,
                        value: v,
                    });
                }
            }
        }
        Ok(LabeledDataset {
            d,
            points,
            labels,
            class_names: None,
        })
    }

    /// Attach class names; requires at least one point per declared class.
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        let present: BTreeSet<ClassId> = self.labels.iter().copied().collect();
        for class in 0..names.len() as ClassId {
            if !present.contains(&class) {
                return Err(DataError::MissingClassExample { class });
            }
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], ClassId)> {
        self.points
            .chunks_exact(self.d)
            .zip(self.labels.iter().copied())
    }

    pub fn distinct_labels(&self) -> BTreeSet<ClassId> {
        self.labels.iter().copied().collect()
    }

    /// Per-axis sample standard deviation (denominator n-1; 0 for n = 1).
    pub fn axis_std(&self) -> Vec<f64> {
        let n = self.n();
        let mut mean = vec![0.0; self.d];
        for p in self.points.chunks_exact(self.d) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; self.d];
        for p in self.points.chunks_exact(self.d) {
            for (s, (v, m)) in var.iter_mut().zip(p.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter()
            .map(|s| if n > 1 { (s / (n as f64 - 1.0)).sqrt() } else { 0.0 })
            .collect()
    }
}

/// Which minimum the reported r-separation is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RSepConvention {
    /// Half the minimum cross-label distance: differently-labeled points
    /// are then at least 2*r_hat apart. Default.
    #[default]
    HalfMinCrossDistance,
    /// The raw minimum cross-label distance.
    RawMinCrossDistance,
}

/// The separation estimate that licenses single-label cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSeparation {
    pub r_hat: f64,
    pub convention: RSepConvention,
    pub metric: Metric,
    /// Indices of the two closest cross-label points.
    pub witness_pair: (usize, usize),
    /// The raw minimum cross-label distance regardless of convention.
    pub min_cross_distance: f64,
}

/// Minimum distance between any two points with different labels, halved
/// under the half convention. The scan is exhaustive O(n^2); parallel
/// chunks reduce to the lexicographically smallest (distance, i, j) so the
/// witness pair is schedule-independent.
pub fn estimate_r_separation(
    ds: &LabeledDataset,
    convention: RSepConvention,
    metric: Metric,
) -> Result<RSeparation, DataError> {
    if ds.distinct_labels().len() < 2 {
        return Err(DataError::SingleClassDataset);
    }
    let n = ds.n();
    use rayon::prelude::*;
    let best = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut local = (f64::INFINITY, usize::MAX, usize::MAX);
            let (pi, li) = (ds.point(i), ds.label(i));
            for j in (i + 1)..n {
                if ds.label(j) == li {
                    continue;
                }
                let dist = metric.distance(pi, ds.point(j));
                if (dist, i, j) < local {
                    local = (dist, i, j);
                }
            }
            local
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            |a, b| if a <= b { a } else { b },
        );
    let (min_cross, wi, wj) = best;
    if min_cross == 0.0 {
        return Err(DataError::LabelNoise { a: wi, b: wj });
    }
    let r_hat = match convention {
        RSepConvention::HalfMinCrossDistance => min_cross / 2.0,
        RSepConvention::RawMinCrossDistance => min_cross,
    };
    Ok(RSeparation {
        r_hat,
        convention,
        metric,
        witness_pair: (wi, wj),
        min_cross_distance: min_cross,
    })
}

/// Labeling rule attached to a synthetic mixture: the side of a hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabelRule {
    Halfplane { normal: Vec<f64>, offset: f64 },
}

impl LabelRule {
    pub fn label(&self, x: &[f64]) -> ClassId {
        match self {
            LabelRule::Halfplane { normal, offset } => {
                let dot: f64 = normal.iter().zip(x).map(|(a, b)| a * b).sum();
                if dot < *offset {
                    0
                } else {
                    1
                }
            }
        }
    }
}

/// One truncated-Gaussian component of a mixture over [0,1]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weight: f64,
}

/// A truncated-Gaussian mixture over the unit hypercube with a deterministic
/// label rule. Doubles as an analytic operational profile: `density`
/// integrates to 1 over [0,1]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
    pub label_rule: LabelRule,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.components.is_empty() {
            return Err(DataError::InvalidMixture("no components".into()));
        }
        let d = self.components[0].mean.len();
        if d == 0 {
            return Err(DataError::InvalidMixture("zero-dimensional mean".into()));
        }
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != d || c.scale.len() != d {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} has inconsistent dimensions"
                )));
            }
            if c.scale.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} has a non-positive scale"
                )));
            }
            if c.weight < 0.0 || !c.weight.is_finite() {
                return Err(DataError::InvalidMixture(format!(
                    "component {i} has a negative weight"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidMixture(format!(
                "weights sum to {total}, not 1"
            )));
        }
        match &self.label_rule {
            LabelRule::Halfplane { normal, .. } if normal.len() != d => {
                return Err(DataError::InvalidMixture(
                    "label rule dimension differs from components".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Probability density at x, truncated and renormalized to [0,1]^d.
    /// Zero outside the hypercube.
    pub fn density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return 0.0;
        }
        let std = Normal::standard();
        let mut total = 0.0;
        for c in &self.components {
            let mut dens = c.weight;
            for ((&xi, &mu), &s) in x.iter().zip(&c.mean).zip(&c.scale) {
                let z = (xi - mu) / s;
                let phi = (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s);
                let mass = std.cdf((1.0 - mu) / s) - std.cdf((0.0 - mu) / s);
                dens *= phi / mass;
            }
            total += dens;
        }
        total
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let spec: MixtureSpec = serde_json::from_str(text)
            .map_err(|e| DataError::InvalidMixture(format!("json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

const MAX_REJECTIONS_PER_POINT: usize = 100_000;

/// Draw n labeled points from a truncated-Gaussian mixture, rejection
/// sampled into [0,1]^d and labeled by the spec's rule. Bit-reproducible
/// from the seed.
pub fn generate_synthetic(
    spec: &MixtureSpec,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let d = spec.dim();
    let mut rng = derive_rng(seed, StreamDomain::Generate, 0);
    let mut points = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        let mut attempts = 0;
        loop {
            let mut u: f64 = rng.random();
            let mut comp = spec.components.len() - 1;
            for (ci, c) in spec.components.iter().enumerate() {
                if u < c.weight {
                    comp = ci;
                    break;
                }
                u -= c.weight;
            }
            let c = &spec.components[comp];
            let mut inside = true;
            for axis in 0..d {
                let g = gaussian_sample(&mut rng);
                let v = c.mean[axis] + c.scale[axis] * g;
                if !(0.0..=1.0).contains(&v) {
                    inside = false;
                    break;
                }
                x[axis] = v;
            }
            if inside {
                break;
            }
            attempts += 1;
            if attempts > MAX_REJECTIONS_PER_POINT {
                return Err(DataError::InvalidMixture(
                    "component mass inside [0,1]^d is too small to sample".into(),
                ));
            }
        }
        points.extend_from_slice(&x);
        labels.push(spec.label_rule.label(&x));
    }
    LabeledDataset::new(d, points, labels)
}

/// Box-Muller standard normal draw; two uniforms per call keeps the stream
/// layout independent of rand's internal distribution implementations.
fn gaussian_sample<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Write `x1,...,xd,label` rows with shortest round-trip float formatting.
pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (1..=ds.dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},label", header.join(","))?;
    for (p, label) in ds.iter() {
        let coords: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{},{}", coords.join(","), label)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by `save_csv`. The header fixes the dimension.
pub fn load_csv(path: &Path) -> Result<LabeledDataset, DataError> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(DataError::EmptyDataset),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols.last() != Some(&"label") {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: "header must be x1,...,xd,label".into(),
        });
    }
    let d = cols.len() - 1;
    for (i, c) in cols[..d].iter().enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: format!("expected column x{}, found {c}", i + 1),
            });
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != d + 1 {
            return Err(DataError::MalformedRow {
                line: lineno,
                reason: format!("expected {} fields, found {}", d + 1, fields.len()),
            });
        }
        for (axis, f) in fields[..d].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| DataError::MalformedRow {
                line: lineno,
                reason: format!("bad float {f:?}"),
            })?;
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(DataError::CoordinateOutOfRange {
                    index: labels.len(),
                    axis,
                    value: v,
                });
            }
            points.push(v);
        }
        let label: ClassId = fields[d].parse().map_err(|_| DataError::MalformedRow {
            line: lineno,
            reason: format!("bad label {:?}", fields[d]),
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    LabeledDataset::new(d, points, labels)
}
