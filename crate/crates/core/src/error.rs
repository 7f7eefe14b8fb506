//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors raised by dataset construction, generation and I/O.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("points and labels differ in length ({points} points, {labels} labels)")]
    LengthMismatch { points: usize, labels: usize },
    #[error("point {index} axis {axis} has coordinate {value} outside [0,1]")]
    CoordinateOutOfRange {
        index: usize,
        axis: usize,
        value: f64,
    },
    #[error("declared class {class} has no points")]
    MissingClassExample { class: u32 },
    #[error("all points share a single label; r-separation is undefined")]
    SingleClassDataset,
    #[error("points {a} and {b} carry different labels at distance 0; partitioning is impossible")]
    LabelNoise { a: usize, b: usize },
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by classifier construction and adapters.
#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("k must satisfy 1 <= k <= n, got k={k} with n={n}")]
    InvalidK { k: usize, n: usize },
    #[error("subprocess adapter failed: {0}")]
    Subprocess(String),
    #[error("invalid oracle definition: {0}")]
    InvalidOracle(String),
}

/// Errors raised while partitioning the input domain.
#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("cell radius {epsilon} must lie in (0, r_hat); r_hat = {r_hat}")]
    EpsilonTooLarge { epsilon: f64, r_hat: f64 },
    #[error("full partition has {m} cells, above the configured cap of {cap}")]
    TooManyCells { m: u128, cap: u128 },
}

/// Errors raised by operational-profile estimation.
#[derive(Debug, Error)]
pub enum OpModelError {
    #[error("all points are identical; bandwidth selection needs spread (use a fixed bandwidth)")]
    DegenerateData,
    #[error("bandwidth must be positive on every axis")]
    NonPositiveBandwidth,
    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
}

/// Errors raised by robustness estimation.
#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("sample budget must be at least 2, got {0}")]
    BudgetTooSmall(usize),
    #[error("cell is not cross-boundary")]
    CellNotCrossBoundary,
    #[error("no estimates supplied")]
    NoEstimates,
}

/// Errors raised while assembling cell-wise estimates.
#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("sampled assembly needs k >= 2, got k={0}")]
    KTooSmall(usize),
    #[error("no cells supplied")]
    NoCells,
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("draw index {index} outside frame of {len} balls")]
    DrawOutOfRange { index: usize, len: usize },
    #[error("{draws} draws paired with {lambdas} lambda estimates")]
    DrawLambdaMismatch { draws: usize, lambdas: usize },
    #[error("sample frame is empty or has no positive weight")]
    EmptyFrame,
    #[error("the drawn balls carry zero total weight; the weighted average is undefined")]
    ZeroWeightDraw,
    #[error("k grid must be ascending with every k >= 2")]
    BadKGrid,
}

/// Errors raised by fault-tree parsing and evaluation.
#[derive(Debug, Error)]
pub enum FtaError {
    #[error("fault tree has a cycle through event {0}")]
    CyclicTree(String),
    #[error("basic event {0} has no probability bound to it")]
    UnboundBe(String),
    #[error("unknown event id {0}")]
    UnknownEvent(String),
    #[error("event {0}: {1}")]
    InvalidEvent(String, String),
    #[error("probability {value} for {id} outside [0,1]")]
    ProbabilityOutOfRange { id: String, value: f64 },
    #[error("event chain is not a path in the tree: {0}")]
    PathNotInTree(String),
    #[error("target {target} unreachable: {reason}")]
    Infeasible { target: f64, reason: String },
    #[error("invalid fault tree: {0}")]
    InvalidTree(String),
}

/// Top-level error for pipeline runs, wrapping module errors.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    OpModel(#[from] OpModelError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("invalid configuration: {0}")]
    Config(String),
}
