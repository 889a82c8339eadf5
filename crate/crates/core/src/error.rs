use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no interactions found")]
    EmptyDataset(PathBuf),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {what} (rule {rule})")]
    NonFinite { what: &'static str, rule: usize },

    #[error("non-finite gradient in parameter group `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("batch has no user with a positive interaction")]
    EmptyBatch,

    #[error("every rule was pruned as dead; retrain with more rules or epochs")]
    AllRulesPruned,

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("rulebook: {0}")]
    Rulebook(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input (bad file, bad id, bad flag)
    /// rather than an internal failure.
    pub fn is_bad_input(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::EmptyDataset(_)
                | Error::InvalidArgument(_)
                | Error::Checkpoint { .. }
                | Error::Rulebook(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
