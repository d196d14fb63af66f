//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// SVD did not produce a decomposition; carries input diagnostics.
    #[error("SVD failed on a {rows}x{cols} matrix (Frobenius norm {norm:e})")]
    SvdFailed { rows: usize, cols: usize, norm: f64 },

    /// The supplied frame does not minimize the lift at this point.
    #[error("frame is not a minimizing frame: stationarity residual {residual:e} exceeds {tol:e}")]
    NotMinimizing { residual: f64, tol: f64 },

    #[error("witness is not feasible: f = {f:e} exceeds {tol:e}")]
    InfeasibleWitness { f: f64, tol: f64 },

    #[error("not enough usable rows for a fit: {got} < {need}")]
    TooFewRows { got: usize, need: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}
