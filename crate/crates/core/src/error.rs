use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters that do not match an architecture.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An API was called out of order (step before reset, backward before forward, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// An action outside the declared action space.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A topology or data file failed validation.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
