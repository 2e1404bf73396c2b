use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{kind} kernel cannot be evaluated at arity {arity}")]
    IllegalArity { kind: &'static str, arity: usize },
    #[error("invalid hyperparameter {name} = {value}")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("non-positive 2-kernel diagonal {value} at {point:?}")]
    NonPositiveDiagonal { point: Vec<f64>, value: f64 },
    #[error("{kind} kernel cannot be re-weighted")]
    IllegalReweightBase { kind: &'static str },
    #[error("{kind} kernel has no scale hyperparameter")]
    NoScale { kind: &'static str },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("row {row} has dimension {found}, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("input {0:?} lies outside the domain")]
    OutOfDomain(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SvmError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("tensor work N^(2q-1) = {work} exceeds the tractability limit")]
    Intractable { work: f64 },
    #[error("classification data must contain both classes")]
    SingleClass,
    #[error("classification labels must be -1 or +1 (row {0})")]
    BadLabel(usize),
    #[error("all inputs are identical")]
    DegenerateInputs,
    #[error("empty hyperparameter grid: {0}")]
    EmptyGrid(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("noise variance must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("Gram matrix is ill-conditioned (condition estimate {condition:e}) even with jitter {jitter:e}")]
    IllConditioned { condition: f64, jitter: f64 },
    #[error("empty hyperparameter grid: {0}")]
    EmptyGrid(&'static str),
    #[error("no grid point produced a factorizable Gram matrix")]
    NoFeasibleHypers,
    #[error("marginal likelihood needs at least one observation")]
    NoData,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("observation must be finite, got {0}")]
    NonFiniteObservation(f64),
    #[error("posterior standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("confidence parameter delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("re-weighting produced no non-zero anchors; the pre-trained kernel would be identically zero")]
    ZeroKernel,
    #[error("invalid configuration: {0}")]
    Config(String),
}
