use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("session is closed")]
    Closed,
    #[error("session is faulted: {0}")]
    Faulted(String),
    #[error(transparent)]
    Core(#[from] waggle_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Short code used in `fault` messages.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Protocol(_) => "bad_message",
            Self::Config(_) => "invalid_config",
            Self::Closed => "session_closed",
            Self::Faulted(_) => "faulted",
            Self::Core(waggle_core::Error::Divergence { .. }) => "divergence",
            Self::Core(_) => "invalid_input",
            Self::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
