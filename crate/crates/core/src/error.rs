use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message} (token `{token}`)")]
    Parse {
        line: usize,
        token: String,
        message: String,
    },

    #[error("no series found")]
    NoSeries,

    #[error("series `{0}` has no observed values")]
    AllMissing(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
