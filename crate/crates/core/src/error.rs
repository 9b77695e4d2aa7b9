use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("invalid feeder: {0}")]
    Validation(String),

    #[error("cycle detected at line {from} -> {to}")]
    Cycle { from: String, to: String },

    #[error("bus {0} is unreachable from the source bus")]
    Unreachable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("power flow did not converge after {iterations} iterations (residual {residual:e} pu){}", hour.map(|h| format!(" at hour {h}")).unwrap_or_default())]
    NonConvergence {
        iterations: usize,
        residual: f64,
        hour: Option<usize>,
    },

    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },

    #[error("artifact not found: {0}")]
    NotFound(String),

    #[error("artifact already exists with different content: {0}")]
    AlreadyExists(String),

    #[error("duplicate job id {0}")]
    DuplicateJob(String),

    #[error("missing input bundle for job {0}")]
    MissingBundle(String),

    #[error("invalid job status transition for {job}: {from:?} -> {to:?}")]
    InvalidTransition {
        job: String,
        from: crate::execution::JobStatus,
        to: crate::execution::JobStatus,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.to_string(),
        }
    }
}
