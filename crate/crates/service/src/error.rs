use gaitlens_core::{CoreError, GaitClass, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error at `{path}`: {message}")]
    Format { path: String, message: String },
    #[error("patient {0} not found")]
    UnknownPatient(String),
    #[error("patient {id} has no {side} side")]
    UnknownSide { id: String, side: Side },
    #[error("no group statistics for {0}")]
    NoGroup(GaitClass),
    #[error("patient {id} {side}: {source}")]
    Leg {
        id: String,
        side: Side,
        #[source]
        source: CoreError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ServiceError {
    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
