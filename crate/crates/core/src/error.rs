use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("{path}:{line}: {msg}")]
    Line { path: String, line: usize, msg: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("score error: {0}")]
    Score(String),

    #[error("checkpoint load failed at `{param}`: {msg}")]
    Checkpoint { param: String, msg: String },

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("unknown utterance ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("non-finite loss at step {step} (batch: {})", .utterances.join(", "))]
    NonFiniteLoss { step: usize, utterances: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data/parse, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::NonFiniteLoss { .. } | Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
