use thiserror::Error;

/// Crate-wide error type. Operations reject bad inputs instead of panicking.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("support mismatch: {0}")]
    Support(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("parse error (line {line}): {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
