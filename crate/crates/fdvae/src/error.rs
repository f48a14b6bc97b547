//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A conditioning event (or similar) has probability zero, so the
    /// requested quantity is undefined.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An input kind the operation does not support (e.g. non-binary
    /// treatment for an ATE query).
    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    /// A configured resource cap was exceeded (e.g. joint-table state space).
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// Training produced a non-finite quantity.
    #[error("training divergence: {0}")]
    TrainingDivergence(String),

    /// Filesystem or parsing failure with path/position context.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
