//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by assembly, factorizations, solvers and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(String),

    /// A linear system could not be solved.
    #[error("singular matrix ({0})")]
    Singular(String),

    /// Greedy interpolation hit a numerically dependent column.
    #[error("rank deficiency detected at column {column} (max residual {residual:.3e})")]
    RankDeficient { column: usize, residual: f64 },

    /// Requested more modes than the data supports.
    #[error("requested {requested} modes but only {available} positive singular values are available")]
    RankExceeded { requested: usize, available: usize },

    /// Newton iteration failed to converge.
    #[error("Newton did not converge at t = {time}: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    /// Mismatched dimensions between operands.
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Invalid argument value.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A persisted artifact is missing or inconsistent with its manifest.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
