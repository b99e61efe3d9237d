use thiserror::Error;

/// Errors raised by the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs violate a precondition (shapes, parameter ranges, game invariants).
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical configuration that cannot be built, e.g. a lattice whose
    /// risk-neutral probability falls outside (0, 1).
    #[error("configuration error: {0}")]
    Config(String),
    /// Arguments outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
