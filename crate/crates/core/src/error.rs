use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown emotion {name:?}; expected one of anger, disgust, fear, happiness, neutral, sadness")]
    UnknownEmotion { name: String },

    #[error("emotion index {0} out of range 0..=5")]
    EmotionIndex(i64),

    #[error("clip rejected: {0}")]
    ClipRejected(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint topology mismatch; differing keys: {}", .0.join(", "))]
    TopologyMismatch(Vec<String>),

    #[error("non-finite loss term `{term}` at iteration {iteration}")]
    NonFiniteLoss { term: String, iteration: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
