use thiserror::Error;

/// Errors raised by the model, theory and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The configuration makes a recursion or control law undefined
    /// (zero denominator, infinite modulation depth, ...).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// A parameter record violates one of its invariants.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}
