use diffnet::DiffnetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Net(#[from] DiffnetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Contract(msg.into()))
}
