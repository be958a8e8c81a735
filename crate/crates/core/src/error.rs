use std::path::PathBuf;

use thiserror::Error;

use crate::kernel_model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    /// The cached region does not fit in local memory.
    #[error("optimization infeasible: local region needs {needed} bytes, capacity is {capacity}")]
    OptimizationInfeasible { needed: u64, capacity: u64 },

    #[error("{0}")]
    Parse(String),

    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("feature schema mismatch: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; ")
}
