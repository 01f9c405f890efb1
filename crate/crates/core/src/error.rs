use thiserror::Error;

use crate::driver::SolveTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input violates a structural precondition (symmetry, orthonormality).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative routine failed to converge or a tolerance was missed.
    #[error("numerical failure in {routine}: {detail}")]
    Numerical {
        routine: &'static str,
        detail: String,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A solve failed part way; the iterations completed so far are kept.
    #[error("solve failed after {} iterations: {source}", trace.records.len())]
    Solve {
        #[source]
        source: Box<Error>,
        trace: Box<SolveTrace>,
    },

    #[error("{failures} of {trials} trials failed in cell {cell} (limit 1%)")]
    FailureThreshold {
        cell: String,
        failures: usize,
        trials: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {detail}")]
    Parse { path: String, detail: String },
}

impl Error {
    pub(crate) fn numerical(routine: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            routine,
            detail: detail.into(),
        }
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Innermost error, looking through solve failures.
    pub fn root(&self) -> &Error {
        match self {
            Error::Solve { source, .. } => source.root(),
            other => other,
        }
    }
}
