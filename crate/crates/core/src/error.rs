use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("failed to load {what}: {reason}")]
    Load { what: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("simulation blew up at step {step} (replica {replica}): {reason}")]
    BlowUp {
        step: u64,
        replica: usize,
        reason: String,
        /// Positions of the offending replica at the failing step.
        frame: Vec<[f64; 3]>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
