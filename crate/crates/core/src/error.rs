use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Malformed file contents. `offset` is the byte position where parsing failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A precondition of the called operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Shapes of two operands disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    /// An iterative numerical method failed.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Invalid experiment or configuration input; `line` is 1-based when known.
    #[error("{}", fmt_config(.line, .message))]
    Config { line: Option<usize>, message: String },
}

fn fmt_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("configuration error on line {l}: {message}"),
        None => format!("configuration error: {message}"),
    }
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by bad input rather than the environment or numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Contract(_) | Error::Dimension { .. } | Error::Config { .. } | Error::Parse { .. }
        )
    }
}
