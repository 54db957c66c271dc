use thiserror::Error;

/// Library-wide error type. `Conditioning` and `Degenerate` are numerical
/// failures; everything else is a data or usage problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported version: {0}")]
    Version(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Conditioning(_) | Error::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
