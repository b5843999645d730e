use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("unknown core id {0}")]
    UnknownCore(u32),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
