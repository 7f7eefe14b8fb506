//! Assembling cell-wise OP and unastuteness estimates into a pmi estimate
//! with variance and confidence upper bound, in full-partition and
//! sampled-frame modes.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{AssemblyError, PipelineError};
use crate::estimate::{Estimate, EstimateMethod};
use crate::op_model::{Ball, SampleFrame};
use crate::rng::{derive_rng, StreamDomain};

/// Weighted sum of cell unastuteness over cell OP, with the variance of a
/// product of independent estimates summed per cell (covariance terms
/// vanish under the independence assumption).
///
/// `cells` pairs each cell's (op, lambda) estimate; summation runs in
/// index order for reproducibility.
pub fn assemble_full(cells: &[(Estimate, Estimate)]) -> Result<Estimate, AssemblyError> {
    if cells.is_empty() {
        return Err(AssemblyError::NoCells);
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    for (op, lambda) in cells {
        mean += lambda.mean * op.mean;
        variance += lambda.mean * lambda.mean * op.variance
            + op.mean * op.mean * lambda.variance
            + lambda.variance * op.variance;
    }
    Ok(Estimate::new(mean, variance, EstimateMethod::Assembled))
}

/// Uniform with-replacement draw of k ball indices from the frame. Weights
/// do not bias the draw; they enter the estimator instead.
pub fn draw_balls(frame: &SampleFrame, k: usize, seed: u64) -> Result<Vec<usize>, AssemblyError> {
    if frame.is_empty() || !frame.has_positive_weight() {
        return Err(AssemblyError::EmptyFrame);
    }
    let mut rng = derive_rng(seed, StreamDomain::FrameDraw, 0);
    Ok((0..k).map(|_| rng.random_range(0..frame.len())).collect())
}

/// Result of a sampled-mode assembly; a negative variance from
/// floating-point cancellation is clamped to zero and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAssembly {
    pub estimate: Estimate,
    pub variance_clamped: bool,
}

/// Weighted-average estimator over k balls drawn with replacement:
/// mean is the weight-normalized average of the drawn lambda means, and
/// the variance is the weighted spread over (k-1). Estimator variances of
/// the individual lambdas and OP weights are deliberately excluded; the
/// draw of k balls is modeled as the dominant uncertainty source.
pub fn assemble_sampled(
    frame: &SampleFrame,
    draws: &[usize],
    lambdas: &[Estimate],
) -> Result<SampledAssembly, AssemblyError> {
    let k = draws.len();
    if k < 2 {
        return Err(AssemblyError::KTooSmall(k));
    }
    if lambdas.len() != k {
        return Err(AssemblyError::DrawLambdaMismatch {
            draws: k,
            lambdas: lambdas.len(),
        });
    }
    let mut weight_sum = 0.0;
    let mut weighted_mean = 0.0;
    let mut weighted_square = 0.0;
    for (&i, lambda) in draws.iter().zip(lambdas) {
        let ball = frame
            .balls
            .get(i)
            .ok_or(AssemblyError::DrawOutOfRange {
                index: i,
                len: frame.len(),
            })?;
        weight_sum += ball.weight;
        weighted_mean += ball.weight * lambda.mean;
        weighted_square += ball.weight * lambda.mean * lambda.mean;
    }
    if weight_sum <= 0.0 {
        return Err(AssemblyError::ZeroWeightDraw);
    }
    let mean = weighted_mean / weight_sum;
    let raw_variance = (weighted_square / weight_sum - mean * mean) / (k as f64 - 1.0);
    let variance_clamped = raw_variance < 0.0;
    Ok(SampledAssembly {
        estimate: Estimate::new(
            mean,
            raw_variance.max(0.0),
            EstimateMethod::Assembled,
        ),
        variance_clamped,
    })
}

/// A one-sided normal-approximation confidence upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// Confidence level 1 - alpha.
    pub confidence: f64,
    pub value: f64,
    /// Set when the raw bound left [0,1] and was clamped.
    pub clamped: bool,
    /// The standard normal quantile used.
    pub z: f64,
}

/// mean + z_{1-alpha} * sqrt(variance), clamped into [0,1] with the clamp
/// flagged. The normality behind the bound is an approximation; reports
/// label it as such.
pub fn confidence_upper_bound(e: &Estimate, alpha: f64) -> Result<UpperBound, AssemblyError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AssemblyError::InvalidAlpha(alpha));
    }
    let z = statrs::distribution::Normal::standard().inverse_cdf(1.0 - alpha);
    let raw = e.mean + z * e.variance.sqrt();
    let value = raw.clamp(0.0, 1.0);
    Ok(UpperBound {
        confidence: 1.0 - alpha,
        value,
        clamped: value != raw,
        z,
    })
}

/// Status of a declared model assumption in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionStatus {
    /// Adopted without a data-driven check.
    Declared,
    /// A check ran and found no violation.
    CheckedOk,
    /// A check ran and found violations; details in the note.
    Violated,
    NotApplicable,
}

/// One entry of the assumption ledger attached to every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRecord {
    pub id: u8,
    pub name: String,
    pub status: AssumptionStatus,
    pub note: String,
}

pub fn assumption(id: u8, name: &str, status: AssumptionStatus, note: impl Into<String>) -> AssumptionRecord {
    AssumptionRecord {
        id,
        name: name.to_string(),
        status,
        note: note.into(),
    }
}

/// Assessment mode tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessmentMode {
    FullPartition,
    Sampled,
}

/// The assembled outcome of a reliability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub mode: AssessmentMode,
    pub pmi: Estimate,
    pub acu: Estimate,
    /// Confidence level (as printed, e.g. "0.975") to upper bound on pmi.
    pub ub: BTreeMap<String, f64>,
    /// The bound is a normal-approximation bound, not distribution-free.
    pub bound_method: String,
    /// Set when any upper bound was clamped into [0,1].
    pub ub_clamped: bool,
    /// Set when the sampled-mode variance was clamped at zero.
    pub variance_clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
    pub assumptions: Vec<AssumptionRecord>,
}

impl ReliabilityResult {
    /// Invariant check: bounds grow with the confidence level and, for
    /// alpha < 0.5, sit at or above the mean.
    pub fn bounds_are_consistent(&self) -> bool {
        let mut prev = f64::NEG_INFINITY;
        for (level, &value) in &self.ub {
            let confidence: f64 = match level.parse() {
                Ok(c) => c,
                Err(_) => return false,
            };
            if value < prev - 1e-12 {
                return false;
            }
            if confidence > 0.5 && value < self.pmi.mean.min(1.0) - 1e-12 {
                return false;
            }
            prev = value;
        }
        true
    }
}

/// Key used in the `ub` map: the confidence level with shortest
/// round-trip formatting.
pub fn confidence_key(alpha: f64) -> String {
    format!("{:?}", 1.0 - alpha)
}

/// One row of the k-convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KConvergencePoint {
    pub k: usize,
    pub pmi: Estimate,
    pub pmi_ub: f64,
    pub acu: Estimate,
    pub acu_ub: f64,
}

/// Sampled-mode estimates as functions of k, with nested draws: each
/// larger k extends the previous sample rather than redrawing. Lambda
/// estimates are computed once per distinct ball and cached, so results
/// do not depend on the draw multiplicity.
pub fn k_convergence(
    frame: &SampleFrame,
    k_grid: &[usize],
    seed: u64,
    alpha: f64,
    mut lambda_for_ball: impl FnMut(usize, &Ball) -> Result<Estimate, PipelineError>,
) -> Result<Vec<KConvergencePoint>, PipelineError> {
    if k_grid.is_empty()
        || k_grid[0] < 2
        || k_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(AssemblyError::BadKGrid.into());
    }
    let k_max = *k_grid.last().expect("non-empty grid");
    let draws = draw_balls(frame, k_max, seed)?;
    let mut cache: BTreeMap<usize, Estimate> = BTreeMap::new();
    let mut lambdas = Vec::with_capacity(k_max);
    for &i in &draws {
        let est = match cache.get(&i) {
            Some(e) => *e,
            None => {
                let e = lambda_for_ball(i, &frame.balls[i])?;
                cache.insert(i, e);
                e
            }
        };
        lambdas.push(est);
    }
    let mut series = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let sampled = assemble_sampled(frame, &draws[..k], &lambdas[..k])?;
        let acu_est = crate::robustness::acu(&lambdas[..k], crate::robustness::AcuMode::Sampled)?;
        let pmi_ub = confidence_upper_bound(&sampled.estimate, alpha)?;
        let acu_ub = confidence_upper_bound(&acu_est, alpha)?;
        series.push(KConvergencePoint {
            k,
            pmi: sampled.estimate,
            pmi_ub: pmi_ub.value,
            acu: acu_est,
            acu_ub: acu_ub.value,
        });
    }
    Ok(series)
}
