use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KvcError>;

#[derive(Debug, Error)]
pub enum KvcError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown age bin {0:?}")]
    UnknownAgeBin(String),

    #[error("unknown gender {0:?}")]
    UnknownGender(String),

    #[error("session {session_id:?} has {len} events, at least {min} are required")]
    SessionTooShort {
        session_id: String,
        len: usize,
        min: usize,
    },

    #[error("protocol precondition failed: {0}")]
    Protocol(String),

    #[error("missing session reference {subject_id}/{session_id}")]
    MissingSession {
        subject_id: String,
        session_id: String,
    },

    #[error("length mismatch: expected {expected} scores, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("score {value} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },

    #[error("empty score list: {0}")]
    EmptyScores(&'static str),

    #[error("fairness evaluation failed: {0}")]
    Fairness(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl KvcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KvcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        KvcError::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's data or files rather than by the engine.
    pub fn is_user_error(&self) -> bool {
        match self {
            KvcError::Json(e) => !e.is_io(),
            _ => true,
        }
    }
}
