use thiserror::Error;

/// Errors produced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violated a structural requirement (order, sign, shape).
    #[error("data error: {0}")]
    Data(String),

    /// A run configuration was inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A row of an input file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Model fitting failed (degenerate design, singular system).
    #[error("fit error: {0}")]
    Fit(String),

    /// A numerical computation left its tolerated range.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
