use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite after jitter ({context})")]
    NotPositiveDefinite { context: String },

    #[error("conditioning failed for pattern {pattern}: observed block is singular")]
    ConditioningFailed { pattern: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("value {value} outside the domain of the inverse transform for feature {feature}")]
    Domain { feature: usize, value: f64 },

    #[error("unsupported prediction: {0}")]
    UnsupportedPrediction(String),

    #[error("no model for test pattern {0}")]
    UnroutablePattern(String),

    #[error("imputation model error: {0}")]
    Imputation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
