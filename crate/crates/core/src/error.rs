use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine and its kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("degenerate column: all values are zero")]
    DegenerateColumn,

    #[error("comparison matrix is not reciprocal at ({row}, {col})")]
    NonReciprocal { row: usize, col: usize },

    #[error("comparison matrices larger than 10x10 are not supported (got {0})")]
    UnsupportedSize(usize),

    #[error("mixed equilibrium has no solution inside [0, 1]")]
    NoInteriorSolution,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("ACR threshold is not available before a steady state has been observed")]
    ThresholdUnavailable,

    #[error("stream exhausted after {0} iterations")]
    StreamExhausted(usize),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("invalid command: {0}")]
    InvalidCommand(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("unknown disruptor `{0}`")]
    UnknownDisruptor(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
