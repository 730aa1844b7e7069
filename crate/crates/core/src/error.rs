use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the model, data, and benchmark code.
#[derive(Debug, Error)]
pub enum SemfiError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("batching error: {0}")]
    Batching(String),

    #[error("format error in {field}: {reason}")]
    Format { field: String, reason: String },

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("degenerate features: {0}")]
    DegenerateFeature(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("encoder error: {0}")]
    Encoder(String),

    #[error("flow estimator error: {0}")]
    Estimator(String),

    #[error("captioner error: {0}")]
    Captioner(String),

    #[error("predictor not configured: {0}")]
    PredictorNotConfigured(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl SemfiError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SemfiError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SemfiError::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, SemfiError::Config(_))
    }

    /// True for errors caused by missing, unreadable, or malformed input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            SemfiError::Data(_)
                | SemfiError::Io { .. }
                | SemfiError::Format { .. }
                | SemfiError::Json(_)
                | SemfiError::Image(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SemfiError>;
