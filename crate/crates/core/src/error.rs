use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration or domain document problem; `path` is a dotted key path.
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown label at `{path}`: {label}")]
    UnknownLabel { path: String, label: String },

    #[error("interaction log row {row}: {message}")]
    Interaction { row: usize, message: String },

    #[error("interaction log contains no records")]
    NoRecords,

    #[error("domain hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("q-table shape mismatch: expected {expected_states}x{expected_actions}, found {states}x{actions}")]
    ShapeMismatch {
        expected_states: usize,
        expected_actions: usize,
        states: usize,
        actions: usize,
    },

    #[error("corrupt q-table file: {0}")]
    Corrupt(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("state space too large to enumerate: {states} states (limit {limit})")]
    TooLarge { states: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Dimension { .. } => "dimension",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::Interaction { .. } => "interaction",
            Error::NoRecords => "no_records",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Corrupt(_) => "corrupt",
            Error::NonFinite(_) => "non_finite",
            Error::EpisodeFinished => "episode_finished",
            Error::NonConvergence { .. } => "non_convergence",
            Error::TooLarge { .. } => "too_large",
            Error::Param(_) => "param",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
