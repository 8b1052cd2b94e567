use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("insufficient samples: required {required}, available {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid label {0}; ratings must be in 1..=5")]
    InvalidLabel(i64),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("embedding endpoint error (status {status}): {body}")]
    Embedding { status: u16, body: String },

    #[error("backend error: {0}")]
    Backend(#[from] BackendError),

    #[error("model {model_id}: batch aborted after {consecutive} consecutive failures (last: {last_error})")]
    BatchAborted {
        model_id: String,
        consecutive: usize,
        last_error: String,
    },

    #[error("stage {stage} failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("run mismatch: {0}")]
    RunMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// the environment (network, disk).
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            Error::Io { .. } | Error::Backend(_) | Error::BatchAborted { .. } | Error::Embedding { .. } => false,
            _ => true,
        }
    }
}

/// Failure reported by a generation backend, distinct from a parse failure
/// of an otherwise successful generation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("HTTP status {status}: {body}")]
    Http { status: u16, body: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("unexpected response: {0}")]
    Protocol(String),
}
