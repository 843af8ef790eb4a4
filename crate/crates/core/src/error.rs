use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-normalizable weight: {0}")]
    NonNormalizableWeight(String),

    #[error("insufficient recurrence: {requested} nodes requested, recurrence depth is {available}")]
    InsufficientRecurrence { requested: usize, available: usize },

    #[error("inconsistent basis: {0}")]
    InconsistentBasis(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("assembly inconsistency: reassembly residual {residual:e} exceeds {tolerance:e}")]
    AssemblyInconsistency { residual: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dependent observables: Gram condition number {condition:e}")]
    DependentObservables { condition: f64 },

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("Volterra scheme diverged at step {step} (norm growth {growth:e})")]
    SchemeDivergence { step: usize, growth: f64 },

    #[error("eigensolver failed to converge after {iterations} iterations")]
    EigensolverFailure { iterations: usize },

    #[error("unstable configuration: {0}")]
    UnstableConfiguration(String),

    #[error("insufficient horizon: maximum lag {max_lag} exceeds horizon {horizon}")]
    InsufficientHorizon { max_lag: f64, horizon: f64 },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
