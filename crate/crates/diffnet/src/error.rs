use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffnetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DiffnetError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DiffnetError::Dimension(msg.into()))
}
