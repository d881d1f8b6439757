use thiserror::Error;

use crate::expr::ExprError;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite input coordinate at position {0}")]
    NonFinite(usize),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("critical point not found: {0}")]
    NotFound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {got} usable samples, need at least {needed}")]
    InsufficientData { needed: usize, got: usize },

    #[error("unknown catalog id `{0}`")]
    UnknownCatalog(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}
