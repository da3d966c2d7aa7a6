use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient oracle failure: {0}")]
    Oracle(String),

    #[error("unknown category {value} for field `{field}` (vocabulary size {vocab})")]
    Vocabulary {
        field: String,
        value: u32,
        vocab: usize,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("non-finite value in {what} at sample {sample}")]
    Numeric { what: String, sample: usize },

    #[error("training diverged in round {round}: non-finite {what} at sample {sample}")]
    Diverged { round: u64, what: String, sample: usize },

    #[error("platform {platform} does not hold sample id {id}")]
    Lookup { platform: String, id: u64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Dimension {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
