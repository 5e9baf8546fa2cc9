use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline crates.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable path {path}: {source}")]
    UnreadablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no files matched the include globs under {root}")]
    NoMatchingFiles { root: PathBuf },

    #[error("duplicate relative path in snapshot: {0}")]
    DuplicateRelativePath(String),

    #[error("invalid glob pattern `{pattern}`: {message}")]
    InvalidGlob { pattern: String, message: String },

    #[error("malformed file {file}: unbalanced braces at line {line}")]
    UnbalancedBraces { file: String, line: usize },

    #[error("parse error in {context}: unterminated {what} at line {line}")]
    UnterminatedClause {
        context: String,
        what: String,
        line: usize,
    },

    #[error("function {0} has not been mode-classified")]
    Unclassified(String),

    #[error("unknown function id: {0}")]
    UnknownFunction(String),

    #[error("unknown task id: {0}")]
    UnknownTask(String),

    #[error("candidate is not a single parsable function: {0}")]
    MalformedCandidate(String),

    #[error("embedding dimension mismatch: index is {expected}, backend returned {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("LLM call budget exhausted ({used}/{max})")]
    BudgetExhausted { used: u32, max: u32 },

    #[error("missing config key: {0}")]
    MissingConfig(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
