use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no requests observed in slot")]
    NoRequests,
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid partition: group sizes sum to {got}, expected {expected}")]
    InvalidPartition { got: usize, expected: usize },
    #[error("incomplete interval: {0}")]
    IncompleteInterval(String),
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("run failed (seed {seed}, step {step}): {source}")]
    Run {
        seed: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("misaligned records: {0}")]
    Misaligned(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by a run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::ConfigParse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
