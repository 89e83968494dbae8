use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants group into the exit-code classes used by the command line tool:
/// configuration problems (2), numerical failures (3) and unmet analysis
/// preconditions (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("`{key}` has the wrong sign: minimum {value}")]
    Negativity { key: String, value: f64 },

    #[error("table for `{key}`: {reason}")]
    TableShape { key: String, reason: String },

    #[error("`{key}` violates the ellipticity floor {floor}: minimum {value}")]
    Ellipticity { key: String, floor: f64, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} lost positivity (min {min:e})")]
    PositivityFailure { what: &'static str, min: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("condition not met: {0}")]
    ConditionNotMet(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent result: {0}")]
    Consistency(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::Negativity { .. }
            | Error::TableShape { .. }
            | Error::Ellipticity { .. }
            | Error::GridMismatch(_)
            | Error::Io { .. }
            | Error::Csv(_) => 2,
            Error::ConditionNotMet(_) => 4,
            Error::NonConvergence { .. }
            | Error::PositivityFailure { .. }
            | Error::LinearSolve(_)
            | Error::Domain(_)
            | Error::InsufficientData(_)
            | Error::Consistency(_)
            | Error::Json(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
