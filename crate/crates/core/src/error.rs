use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, UplError>;

#[derive(Debug, Error)]
pub enum UplError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("random-walk filter undefined: node {node} is isolated")]
    IsolatedNode { node: usize },

    #[error("class {class} has no member nodes")]
    EmptyClass { class: usize },

    #[error("class {class} has a zero training count")]
    ZeroClassCount { class: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at outer iteration {iteration}, epoch {epoch}: {reason}")]
    Divergence {
        iteration: usize,
        epoch: usize,
        reason: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl UplError {
    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(self, UplError::Divergence { .. } | UplError::NonFinite(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        UplError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UplError::Io {
            path: path.into(),
            source,
        }
    }
}
