use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// Every photodiode of the user sees zero gain from every access point.
    #[error("user {0} is disconnected: all channel gains are zero")]
    DisconnectedUser(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    /// Structured file parse failure; `offset` is the byte offset of the offending line.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("training aborted at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("dataset generation aborted: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
