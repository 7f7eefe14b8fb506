//! The (mean, variance) pair that every estimator produces and the
//! assembler consumes.

use serde::{Deserialize, Serialize};

/// Provenance of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// KDE point density with bootstrap variance.
    KdeBootstrap,
    /// Simple Monte Carlo sampling.
    Smc,
    /// Assigned by convention (e.g. cross-boundary cells).
    Assigned,
    /// Combined from per-cell estimates.
    Assembled,
    /// Exact quadrature or closed form; variance zero by construction.
    Exact,
}

/// A point estimate with its variance and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    #[serde(rename = "var")]
    pub variance: f64,
    pub method: EstimateMethod,
}

impl Estimate {
    pub fn new(mean: f64, variance: f64, method: EstimateMethod) -> Self {
        debug_assert!(variance >= 0.0, "variance must be non-negative");
        Estimate {
            mean,
            variance,
            method,
        }
    }

    pub fn exact(mean: f64) -> Self {
        Estimate::new(mean, 0.0, EstimateMethod::Exact)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}
