//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document line could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate fingerprint {fingerprint} on lines {first_line} and {second_line}")]
    DuplicateFingerprint {
        fingerprint: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("document has no valid-after line")]
    MissingValidAfter,

    /// Structurally valid input that violates a data invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every pool total is zero; no load case is defined.
    #[error("degenerate network: total consensus weight is zero")]
    DegenerateNetwork,

    #[error("unsupported network-load case: {0}")]
    UnsupportedCase(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The requested computation does not apply to this input; callers fall
    /// back to the scalar path.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("empty pool: {0}")]
    EmptyPool(String),

    /// An internal invariant check failed after a computation.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
