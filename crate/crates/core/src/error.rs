use thiserror::Error;

/// Errors raised by the engine, the networks, the samplers and the training loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Incompatible shapes or a malformed structure.
    #[error("structural error: {0}")]
    Structural(String),
    /// A NaN or infinity appeared where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An operation was called out of order or with arguments outside its domain.
    #[error("usage error: {0}")]
    Usage(String),
    /// An invalid configuration value.
    #[error("config error: `{key}`: {message}")]
    Config { key: String, message: String },
    /// Malformed or unavailable input data.
    #[error("data error: {0}")]
    Data(String),
    /// Reading or writing an artifact failed.
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
