//! Run configuration shared by `assess` and `table`: model specs, mode
//! strings, and execution against the core pipeline.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use relikit_core::classifier::{
    train_knn, Classifier, OracleClassifier, SubprocessClassifier, TruthRule,
};
use relikit_core::dataset::{load_csv, LabeledDataset, Metric, MixtureSpec, RSepConvention};
use relikit_core::op_model::{BandwidthPolicy, Kernel};
use relikit_core::partition::VoteTieRule;
use relikit_core::pipeline::{
    run_assess, AssessConfig, AssessOutcome, EpsilonSpec, GroundTruthSource, OpSource, RunMode,
};
use relikit_core::robustness::SmcEstimator;

/// One assessment run as declared in a table config file or assembled
/// from `assess` flags.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub data: PathBuf,
    /// Held-out set for the test-error column; the training set doubles
    /// as test set when absent.
    #[serde(default)]
    pub test_data: Option<PathBuf>,
    pub model: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub epsilon_frac: Option<f64>,
    #[serde(default = "default_op")]
    pub op: String,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub bandwidth: Option<String>,
    #[serde(default)]
    pub reflect: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_ns")]
    pub ns: usize,
    #[serde(default = "default_resolve_samples")]
    pub resolve_samples: usize,
    #[serde(default)]
    pub strict_ties: bool,
    /// Resolve empty-cell labels from the oracle model's truth rule
    /// instead of voting; estimator-validation mode.
    #[serde(default)]
    pub truth_from_oracle: bool,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub convention: Option<String>,
    #[serde(default)]
    pub metric: Option<String>,
    pub seed: u64,
}

fn default_op() -> String {
    "kde".into()
}
fn default_bootstrap() -> usize {
    100
}
fn default_ns() -> usize {
    1000
}
fn default_resolve_samples() -> usize {
    30
}
fn default_mode() -> String {
    "full".into()
}
fn default_alpha() -> Vec<f64> {
    vec![0.025]
}

pub fn parse_convention(s: Option<&str>) -> Result<RSepConvention> {
    Ok(match s.unwrap_or("half") {
        "half" => RSepConvention::HalfMinCrossDistance,
        "raw" => RSepConvention::RawMinCrossDistance,
        other => bail!("unknown convention {other:?} (expected half|raw)"),
    })
}

pub fn parse_metric(s: Option<&str>) -> Result<Metric> {
    Ok(match s.unwrap_or("linf") {
        "linf" => Metric::Linf,
        "l2" => Metric::L2,
        other => bail!("unknown metric {other:?} (expected linf|l2)"),
    })
}

fn parse_kernel(s: Option<&str>) -> Result<Kernel> {
    Ok(match s.unwrap_or("gaussian") {
        "gaussian" => Kernel::Gaussian,
        "exponential" => Kernel::Exponential,
        other => bail!("unknown kernel {other:?} (expected gaussian|exponential)"),
    })
}

fn parse_bandwidth(s: Option<&str>) -> Result<BandwidthPolicy> {
    Ok(match s.unwrap_or("silverman") {
        "silverman" => BandwidthPolicy::RuleOfThumb,
        "cv" => BandwidthPolicy::CvGrid,
        other => match other.strip_prefix("fixed:") {
            Some(h) => BandwidthPolicy::Fixed {
                h: h.parse().with_context(|| format!("bad bandwidth {h:?}"))?,
            },
            None => bail!("unknown bandwidth {other:?} (expected silverman|cv|fixed:<h>)"),
        },
    })
}

fn parse_mode(s: &str) -> Result<RunMode> {
    if s == "full" {
        return Ok(RunMode::Full);
    }
    if let Some(k) = s.strip_prefix("sampled:") {
        return Ok(RunMode::Sampled {
            k: k.parse().with_context(|| format!("bad k {k:?}"))?,
        });
    }
    if let Some(grid) = s.strip_prefix("kgrid:") {
        let grid: Vec<usize> = grid
            .split(',')
            .map(|v| v.parse().with_context(|| format!("bad k {v:?}")))
            .collect::<Result<_>>()?;
        return Ok(RunMode::KGrid { grid });
    }
    bail!("unknown mode {s:?} (expected full|sampled:<k>|kgrid:<k,...>)")
}

/// A model ready to run, keeping the oracle around for truth-rule access.
pub struct PreparedModel {
    pub classifier: Arc<dyn Classifier>,
    pub oracle: Option<OracleClassifier>,
}

/// Parse `knn:<k>`, `oracle:<path.json>` or `cmd:<program args...>` and
/// construct the classifier.
pub fn prepare_model(spec: &str, ds: &LabeledDataset, metric: Metric) -> Result<PreparedModel> {
    if let Some(k) = spec.strip_prefix("knn:") {
        let k: usize = k.parse().with_context(|| format!("bad k in {spec:?}"))?;
        let clf = train_knn(ds, k, metric)?;
        return Ok(PreparedModel {
            classifier: Arc::new(clf),
            oracle: None,
        });
    }
    if let Some(path) = spec.strip_prefix("oracle:") {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading oracle definition {path}"))?;
        let oracle = OracleClassifier::from_json(&text)?;
        return Ok(PreparedModel {
            classifier: Arc::new(oracle.clone()),
            oracle: Some(oracle),
        });
    }
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        let words: Vec<String> = cmd.split_whitespace().map(String::from).collect();
        let (program, args) = words
            .split_first()
            .context("empty subprocess command")?;
        let clf = SubprocessClassifier::spawn(program, args, ds.dim())?;
        return Ok(PreparedModel {
            classifier: Arc::new(clf),
            oracle: None,
        });
    }
    bail!("unknown model spec {spec:?} (expected knn:<k>|oracle:<path>|cmd:<program...>)")
}

/// Materialize an `AssessConfig` from a run spec.
pub fn build_config(spec: &RunSpec, oracle: Option<&OracleClassifier>) -> Result<AssessConfig> {
    let epsilon = match (spec.epsilon, spec.epsilon_frac) {
        (Some(e), None) => EpsilonSpec::Fixed(e),
        (None, Some(f)) => EpsilonSpec::FractionOfR(f),
        (None, None) => EpsilonSpec::FractionOfR(0.9),
        (Some(_), Some(_)) => bail!("give either epsilon or epsilon_frac, not both"),
    };
    let op = match spec.op.as_str() {
        "kde" => OpSource::Kde {
            kernel: parse_kernel(spec.kernel.as_deref())?,
            policy: parse_bandwidth(spec.bandwidth.as_deref())?,
            reflect: spec.reflect,
            bootstrap: if spec.bootstrap == 0 {
                None
            } else {
                Some(spec.bootstrap)
            },
        },
        "flat" => OpSource::Flat,
        other => match other.strip_prefix("mixture:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading mixture {path}"))?;
                OpSource::AnalyticMixture {
                    spec: MixtureSpec::from_json(&text)?,
                    quadrature: Some(4),
                }
            }
            None => bail!("unknown op {other:?} (expected kde|flat|mixture:<path>)"),
        },
    };
    let truth = if spec.truth_from_oracle {
        let oracle = oracle.context("truth_from_oracle requires an oracle model")?;
        GroundTruthSource::TruthRule(oracle.truth.clone())
    } else {
        GroundTruthSource::Vote {
            samples: spec.resolve_samples,
            tie: if spec.strict_ties {
                VoteTieRule::MarkCrossBoundary
            } else {
                VoteTieRule::SmallestClassId
            },
        }
    };
    Ok(AssessConfig {
        epsilon,
        convention: parse_convention(spec.convention.as_deref())?,
        metric: parse_metric(spec.metric.as_deref())?,
        op,
        truth,
        sample_budget: spec.ns,
        alphas: spec.alpha.clone(),
        mode: parse_mode(&spec.mode)?,
        seed: spec.seed,
        max_full_cells: 2_000_000,
    })
}

pub struct ExecutedRun {
    pub outcome: AssessOutcome,
    pub train_error: f64,
    pub test_error: f64,
    pub elapsed_seconds: f64,
}

/// Load data, build the model and run the assessment.
pub fn execute(spec: &RunSpec, base_dir: &Path) -> Result<ExecutedRun> {
    let data_path = resolve(base_dir, &spec.data);
    let ds = load_csv(&data_path).with_context(|| format!("loading {}", data_path.display()))?;
    let metric = parse_metric(spec.metric.as_deref())?;
    let model = prepare_model(&spec.model, &ds, metric)?;
    let cfg = build_config(spec, model.oracle.as_ref())?;
    let train_error = relikit_core::classifier::test_error(model.classifier.as_ref(), &ds);
    let test_error = match &spec.test_data {
        Some(p) => {
            let path = resolve(base_dir, p);
            let test =
                load_csv(&path).with_context(|| format!("loading {}", path.display()))?;
            relikit_core::classifier::test_error(model.classifier.as_ref(), &test)
        }
        None => train_error,
    };
    let started = std::time::Instant::now();
    let outcome = run_assess(&cfg, &ds, model.classifier.as_ref(), &SmcEstimator)?;
    Ok(ExecutedRun {
        outcome,
        train_error,
        test_error,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
