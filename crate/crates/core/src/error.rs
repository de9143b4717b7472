use autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{what}: file truncated")]
    Truncated { what: &'static str },
    #[error("{what}: bad magic or unsupported version")]
    BadHeader { what: &'static str },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("low-quality input: {0}")]
    LowQuality(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
