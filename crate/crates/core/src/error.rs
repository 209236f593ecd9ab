use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension mismatch in `{operand}`: expected {expected}, got {got}")]
    Dimension {
        operand: String,
        expected: String,
        got: String,
    },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input line (1-based line number).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates the dataset or checkpoint schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(operand: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            operand: operand.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the content of an input data file.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Schema(_))
    }
}
