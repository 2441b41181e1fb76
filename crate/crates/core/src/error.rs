use thiserror::Error;

/// Errors produced by corpus ingestion, training, and the self-training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("no records in {0}")]
    NoRecords(String),

    #[error("unknown label `{label}` at line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("class `{class}` has {available} labeled examples, need {required}")]
    InsufficientExamples {
        class: String,
        required: usize,
        available: usize,
    },

    #[error("cannot classify empty document")]
    EmptyDocument,

    #[error("training diverged")]
    Diverged,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
