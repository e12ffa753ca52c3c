use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or sizes that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    /// A call that violates a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("scene format error: {0}")]
    Scene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
