use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the estimation, diagnostics and simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IpdError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient data: need at least {needed} rows, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("matrix is rank deficient: smallest eigenvalue {min_eigenvalue:e} below floor {floor:e}")]
    Rank { min_eigenvalue: f64, floor: f64 },

    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last_iterate: Vec<f64> },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("harness failure: {0}")]
    Harness(String),
}

pub type Result<T> = core::result::Result<T, IpdError>;
