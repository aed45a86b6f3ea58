use thiserror::Error;

use crate::catalog::{ChannelId, Side};

/// Errors produced by the core pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing channel {0}")]
    MissingChannel(ChannelId),
    #[error("missing side {0}")]
    MissingSide(Side),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CoreError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for CoreError {
    fn from(err: std::io::Error) -> Self {
        CoreError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
