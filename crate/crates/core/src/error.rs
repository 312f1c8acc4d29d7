use thiserror::Error;

#[derive(Debug, Error)]
pub enum KplError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("location {location} outside observed span [{low}, {high}]")]
    OutOfRange { location: f64, low: f64, high: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KplError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KplError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        KplError::Numeric(msg.into())
    }

    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, KplError::Numeric(_) | KplError::Capacity(_))
    }
}

pub type Result<T> = std::result::Result<T, KplError>;
