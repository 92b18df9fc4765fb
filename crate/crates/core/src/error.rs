use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bid: {0}")]
    InvalidBid(String),

    #[error("invalid time {0}: must lie in [0, 1]")]
    InvalidTime(f64),

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("outcome space of {size} bids exceeds the enumeration cap of {cap}")]
    OracleUnavailable { size: u64, cap: u64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("cannot decode action vector: {0}")]
    Decode(String),

    #[error("cannot parse rule text: {0}")]
    Rule(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("not enough data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
