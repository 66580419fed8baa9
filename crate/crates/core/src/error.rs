use thiserror::Error;

/// Errors raised by the estimators, metrics and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data or configuration violates a precondition.
    #[error("input error: {0}")]
    Input(String),
    /// A numerical routine failed (non-convergence, indefinite matrix, ...).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A Monte Carlo sweep lost more replicates than its failure budget allows.
    #[error("failure budget exceeded: {failed} of {total} replicates failed for n={n}, {method}")]
    FailureBudget {
        n: usize,
        method: String,
        failed: usize,
        total: usize,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
