use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent caller input (dimensions, ranges, options).
    #[error("input error: {0}")]
    Input(String),

    /// The constraint set `{x : a'x = d, l <= x <= u}` is empty.
    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    /// Failure while reading a data file, with 1-based location.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Armijo backtracking exhausted its trial budget.
    #[error("line search failed after {trials} trials (directional derivative {slope:e})")]
    LineSearch { trials: usize, slope: f64 },

    /// A numerical routine broke down where it should not have.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
