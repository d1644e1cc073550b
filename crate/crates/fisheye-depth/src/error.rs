//! Error type shared across the toolkit.

/// Errors produced by geometry, loss, optimization, and I/O operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor or operation received parameters outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// An input value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented contract between modules was violated (shape mismatch,
    /// nonpositive depth at a valid pixel, empty valid set, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Optimization produced a non-finite loss.
    #[error("diverged: {0}")]
    Diverged(String),

    /// A file did not conform to its format specification.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code convention: 1 for contract/domain violations, 2 for I/O
    /// and format errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
