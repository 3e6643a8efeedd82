use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument outside supported domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("{what} did not converge after {evaluations} evaluations")]
    NonConvergence {
        what: &'static str,
        evaluations: usize,
    },

    #[error("covariance matrix is not positive definite even with jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("all {restarts} restarts failed; last error: {last}")]
    AllStartsFailed { restarts: usize, last: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: series `{id}` has non-increasing times at line {line}")]
    NonMonotonic {
        path: PathBuf,
        id: String,
        line: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidInput(detail.into())
    }

    /// True for failures that come from the data rather than from numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidScenario(_)
                | Error::Parse { .. }
                | Error::MissingColumn { .. }
                | Error::NonMonotonic { .. }
                | Error::Csv(_)
        )
    }
}
