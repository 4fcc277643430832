use std::io;

use thiserror::Error;

/// Errors produced by the latent factor engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no ratings")]
    NoRatings,

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("duplicate rating for user {user:?} and item {item:?} at line {line}")]
    DuplicatePair {
        user: String,
        item: String,
        line: usize,
    },

    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),

    #[error("dataset too small: {0} entries, need at least 3")]
    DatasetTooSmall(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty {0} set")]
    EmptySet(&'static str),

    #[error("diverged")]
    Diverged,

    #[error("invalid snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::NoRatings
                | Error::Parse { .. }
                | Error::DuplicatePair { .. }
                | Error::DatasetTooSmall(_)
                | Error::EmptySet(_)
                | Error::Snapshot(_)
                | Error::Io(_)
                | Error::ShapeMismatch(_)
                | Error::IndexOutOfRange(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
