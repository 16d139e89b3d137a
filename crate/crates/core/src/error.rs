use thiserror::Error;

/// Errors produced by the detection, tracking and pipeline layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate patch: zero variance")]
    DegeneratePatch,

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("pointer is not calibrated")]
    NotCalibrated,

    #[error("no line to merge")]
    NoLine,

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
