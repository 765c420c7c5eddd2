use thiserror::Error;

/// Errors raised anywhere in the ADE pipeline.
///
/// The variants map onto the CLI exit-code classes: configuration problems,
/// numeric failures (divergence, failed gradient checks) and data problems
/// (malformed inputs, corrupt artifacts).
#[derive(Debug, Error)]
pub enum AdeError {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("gradient check failed at parameter {index}: {detail}")]
    GradCheck { index: usize, detail: String },

    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AdeError>;

impl AdeError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        AdeError::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        AdeError::Config(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        AdeError::Corrupt(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        AdeError::Data(msg.into())
    }
}
