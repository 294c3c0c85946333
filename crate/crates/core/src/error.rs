use thiserror::Error;

/// Errors produced by the simulation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported lattice dimension {0} (must be 1..={max})", max = crate::lattice::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("domain is empty")]
    EmptyDomain,

    #[error("lag set is empty for the requested lag")]
    EmptyLagSet,

    #[error("invalid domain shape: {0}")]
    InvalidShape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("operation not supported for {model} models: {operation}")]
    UnsupportedModel {
        model: &'static str,
        operation: &'static str,
    },

    #[error("unsupported norm order p = {p} for {distribution} innovations")]
    UnsupportedNorm { p: f64, distribution: &'static str },

    #[error("degenerate variance: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root search did not converge: {0}")]
    NonConvergence(String),

    #[error("lattice point {0} is outside the admissible range")]
    OutOfRange(String),

    #[error("search budget exhausted; index is at least {lower_bound}")]
    BudgetExhausted { lower_bound: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
