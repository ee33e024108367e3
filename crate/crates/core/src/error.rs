use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to load {modality} raster for tile '{tile}': {reason}")]
    Load {
        tile: String,
        modality: String,
        reason: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("non-finite loss at step {step}: {breakdown}")]
    NonFiniteLoss { step: u64, breakdown: String },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{0}")]
    Harness(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
