use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("overflow in linear domain: {0}; use the log-domain accessor")]
    Overflow(String),
    #[error("capability: {0}")]
    Capability(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singular point: {0}")]
    Singularity(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("accuracy not reached: {message} (achieved {achieved:.3e})")]
    Accuracy { message: String, achieved: f64 },
    #[error("out of range: {0}")]
    Range(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("poor fit quality: {message}; residuals {residuals:?}")]
    FitQuality { message: String, residuals: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
