use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid design, scenario or scheme configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Internal invariant broken (e.g. a non-monotone decision rule).
    #[error("consistency error: {0}")]
    Consistency(String),
    /// Malformed or out-of-order trial event.
    #[error("event error: {0}")]
    Event(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
