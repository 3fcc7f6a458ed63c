use thiserror::Error;

/// Errors produced by the imputation library.
#[derive(Debug, Error)]
pub enum TwiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data; `row` is the 0-based row index in the source file.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The constraint set admits no feasible point (or contradicts the data).
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// A solver failed numerically (singular system, underflow, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, TwiError>;
