use thiserror::Error;

/// Errors produced by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid rescale (a = {a}, b = {b}): b must be at least 1")]
    InvalidRescale { a: i64, b: i64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("backtracking span of {requested} periods exceeds the retained window of {available}")]
    WindowExceeded { requested: usize, available: usize },

    #[error("field size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("traces do not share grids and Hamiltonian")]
    GridMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
