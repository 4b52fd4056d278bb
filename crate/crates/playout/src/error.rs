//! Error type shared across the toolkit.

/// Errors produced by estimators, deciders, the simulator and trace I/O.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Not enough samples to compute the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The data admits no meaningful model (e.g. all delays equal).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// A trace file line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A structurally well-formed trace violates an invariant
    /// (duplicate sequence numbers, negative delay, ...).
    #[error("invalid trace: {0}")]
    Validation(String),

    /// Invalid configuration parameters.
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
