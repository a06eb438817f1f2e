use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TnaError>;

#[derive(Debug, Error)]
pub enum TnaError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid alphabet: {0}")]
    Alphabet(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("selection `{0}` matched no sequences")]
    EmptySelection(String),
    #[error("alphabets differ (only in first: [{}]; only in second: [{}])", .only_first.join(", "), .only_second.join(", "))]
    AlphabetMismatch {
        only_first: Vec<String>,
        only_second: Vec<String>,
    },
    #[error("expected {expected} scaling, found {found}")]
    Scaling { expected: String, found: String },
    #[error("unknown measure `{name}` (valid: {})", .valid.join(", "))]
    UnknownMeasure { name: String, valid: Vec<String> },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("fit failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl TnaError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            TnaError::InvalidParameter(_) | TnaError::UnknownMeasure { .. } => ErrorKind::Config,
            TnaError::Singular(_) | TnaError::Failed(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        TnaError::InvalidParameter(msg.to_string())
    }
}
