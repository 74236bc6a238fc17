use std::path::PathBuf;

use ens_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsError {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("version mismatch: {0}")]
    Versioning(String),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T, E = EnsError> = std::result::Result<T, E>;

impl EnsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
