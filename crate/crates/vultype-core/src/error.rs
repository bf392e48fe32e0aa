//! Error type shared across the crate.

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code scheme: `Parse`, `Validation` and
/// `Io` are data/I-O failures (exit 2), `Config` is a configuration
/// failure (exit 3), `Shape` and `Numeric` are numeric failures (exit 4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
