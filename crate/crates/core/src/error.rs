use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HsomError>;

#[derive(Debug, Error)]
pub enum HsomError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    /// A growth task failed; `path` is the neuron-index path of the node whose
    /// task failed (empty for the root).
    #[error("training failed at node {path:?}: {message}")]
    TrainingFailed { path: Vec<usize>, message: String },
}

impl HsomError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HsomError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HsomError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable code used in CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            HsomError::InvalidInput(_) => "E_INPUT",
            HsomError::Config(_) => "E_CONFIG",
            HsomError::Io { .. } => "E_IO",
            HsomError::Format { .. } => "E_FORMAT",
            HsomError::TrainingFailed { .. } => "E_TRAIN",
        }
    }

    /// Process exit status: 2 config/input, 3 io, 4 training failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HsomError::InvalidInput(_) | HsomError::Config(_) => 2,
            HsomError::Io { .. } | HsomError::Format { .. } => 3,
            HsomError::TrainingFailed { .. } => 4,
        }
    }
}
