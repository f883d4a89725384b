use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid id {id} for {table}")]
    InvalidId { id: i64, table: String },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("candidate pool exhausted")]
    PoolExhausted,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("AUC undefined: labels contain a single class")]
    SingleClass,

    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            actual,
            context,
        })
    }
}
