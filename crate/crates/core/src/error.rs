use thiserror::Error;

/// Errors raised by the beamforming toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A linear-algebra step failed (singular or non-positive-definite matrix).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A measurement could not be taken on the given profile or image.
    #[error("measurement error: {0}")]
    Measurement(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
