//! Operational reliability assessment for classifiers.
//!
//! The toolkit estimates the probability of misclassification per input
//! (pmi) of a trained classifier by partitioning the input domain into
//! cells smaller than the r-separation of the data, weighting each cell's
//! Monte Carlo unastuteness by its operational-profile mass, and
//! assembling the cell-wise estimates with propagated variance and a
//! normal-approximation confidence upper bound. A sampled mode covers
//! problems too large for full partitioning, and a quantitative
//! fault-tree module links component-level reliability to system-level
//! safety targets.

pub mod assembly;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod estimate;
pub mod fta;
pub mod op_model;
pub mod partition;
pub mod pipeline;
pub mod rng;
pub mod robustness;

pub use estimate::{Estimate, EstimateMethod};
