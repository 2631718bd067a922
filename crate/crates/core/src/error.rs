use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty polynomial family")]
    EmptyFamily,

    #[error("matrix is not orthogonal (max |RᵀR - I| = {0:e})")]
    NotOrthogonal(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("wrong ambient space: {0}")]
    WrongSpace(String),

    #[error("singular point: jacobian rank {rank} < {expected}")]
    Singular { rank: usize, expected: usize },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown corpus entry `{0}`")]
    UnknownCorpus(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
