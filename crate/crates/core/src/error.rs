use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("projection error: {0}")]
    Projection(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("dataset validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("non-finite loss at epoch {epoch}, clip {clip_id}")]
    NonFiniteLoss { epoch: usize, clip_id: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
