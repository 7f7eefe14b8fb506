//! Cell unastuteness estimation: the probability that the classifier
//! contradicts the cell's ground-truth label on a random input from the
//! cell, under a uniform conditional operational profile.

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::dataset::ClassId;
use crate::error::RobustnessError;
use crate::estimate::{Estimate, EstimateMethod};
use crate::partition::{uniform_in_box, CellStatus};
use crate::rng::{derive_rng, StreamDomain};

/// Distribution assumed for inputs inside a cell. Extensible: assembly is
/// agnostic to the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalOp {
    #[default]
    Uniform,
}

/// Everything an astuteness estimator needs about one cell. The ground
/// truth must already be resolved; cross-boundary cells never reach an
/// estimator.
#[derive(Debug, Clone)]
pub struct CellRobustnessQuery {
    pub center: Vec<f64>,
    /// Cell side length in the L-infinity sense.
    pub radius: f64,
    pub ground_truth: ClassId,
    pub conditional_op: ConditionalOp,
    pub sample_budget: usize,
    pub master_seed: u64,
    /// Stream index separating this cell's draws from every other cell's.
    pub stream_index: u64,
}

impl CellRobustnessQuery {
    /// Cell box clipped to the unit hypercube.
    fn clipped_box(&self) -> (Vec<f64>, Vec<f64>) {
        let half = self.radius / 2.0;
        let lo = self.center.iter().map(|c| (c - half).clamp(0.0, 1.0)).collect();
        let hi = self.center.iter().map(|c| (c + half).clamp(0.0, 1.0)).collect();
        (lo, hi)
    }
}

/// Pluggable estimator slot; the default is Simple Monte Carlo. Rare-event
/// estimators (e.g. multilevel splitting) can be swapped in without
/// touching assembly.
pub trait AstutenessEstimator: Send + Sync {
    fn estimate(&self, classifier: &dyn Classifier, query: &CellRobustnessQuery)
        -> Result<Estimate, RobustnessError>;
    fn name(&self) -> &'static str;
}

/// Simple Monte Carlo unastuteness estimator.
#[derive(Debug, Clone, Copy, Default)]
pub struct SmcEstimator;

impl AstutenessEstimator for SmcEstimator {
    fn estimate(
        &self,
        classifier: &dyn Classifier,
        query: &CellRobustnessQuery,
    ) -> Result<Estimate, RobustnessError> {
        smc_unastuteness(classifier, query)
    }

    fn name(&self) -> &'static str {
        "smc"
    }
}

/// Mean and variance of the misclassification indicator over uniform
/// samples in the cell: the sample mean, and the sample variance of the
/// mean (sum of squared deviations over (n-1)n).
pub fn smc_unastuteness(
    classifier: &dyn Classifier,
    query: &CellRobustnessQuery,
) -> Result<Estimate, RobustnessError> {
    let n_s = query.sample_budget;
    if n_s < 2 {
        return Err(RobustnessError::BudgetTooSmall(n_s));
    }
    let ConditionalOp::Uniform = query.conditional_op;
    let mut rng = derive_rng(query.master_seed, StreamDomain::CellRobustness, query.stream_index);
    let (lo, hi) = query.clipped_box();
    let mut x = vec![0.0; query.center.len()];
    let mut misses = 0usize;
    for _ in 0..n_s {
        uniform_in_box(&mut rng, &lo, &hi, &mut x);
        if classifier.predict(&x) != query.ground_truth {
            misses += 1;
        }
    }
    let n = n_s as f64;
    let mean = misses as f64 / n;
    // For 0/1 indicators the sum of squared deviations collapses to
    // n * mean * (1 - mean); dividing by (n-1)n gives the variance of the
    // mean without accumulation error.
    let variance = mean * (1.0 - mean) / (n - 1.0);
    Ok(Estimate::new(mean, variance, EstimateMethod::Smc))
}

/// Conservative unastuteness for a cross-boundary cell: exactly one with
/// zero variance. Feeds assembly like any other estimate.
pub fn assign_cross_boundary(status: CellStatus) -> Result<Estimate, RobustnessError> {
    match status {
        CellStatus::CrossBoundary => Ok(Estimate::new(1.0, 0.0, EstimateMethod::Assigned)),
        _ => Err(RobustnessError::CellNotCrossBoundary),
    }
}

/// Which population the ACU averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcuMode {
    /// The supplied estimates cover all m cells of a full partition.
    FullPartition,
    /// The supplied estimates are k balls drawn from a sample frame;
    /// mean and variance follow the equal-weight weighted-average
    /// estimator.
    Sampled,
}

/// Average cell unastuteness: the unweighted mean of the cell estimates.
///
/// Full-partition variance propagates each cell's variance at weight 1/m
/// with zero weight uncertainty; sampled variance is the equal-weight
/// special case of the weighted-average estimator.
pub fn acu(lambdas: &[Estimate], mode: AcuMode) -> Result<Estimate, RobustnessError> {
    if lambdas.is_empty() {
        return Err(RobustnessError::NoEstimates);
    }
    let m = lambdas.len() as f64;
    let mean = lambdas.iter().map(|e| e.mean).sum::<f64>() / m;
    let variance = match mode {
        AcuMode::FullPartition => {
            lambdas.iter().map(|e| e.variance).sum::<f64>() / (m * m)
        }
        AcuMode::Sampled => {
            if lambdas.len() < 2 {
                0.0
            } else {
                let mean_sq = lambdas.iter().map(|e| e.mean * e.mean).sum::<f64>() / m;
                ((mean_sq - mean * mean) / (m - 1.0)).max(0.0)
            }
        }
    };
    Ok(Estimate::new(mean, variance, EstimateMethod::Assembled))
}
