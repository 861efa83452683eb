//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegMdpError {
    /// Array shapes or index ranges do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A vector that must be a probability distribution is not one.
    #[error("invalid distribution: {0}")]
    Distribution(String),

    /// A numeric input is outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The chain violates the ergodicity assumption (no stationary
    /// distribution found within the iteration cap / solve tolerance).
    #[error("ergodicity violation: {0}")]
    Ergodicity(String),

    /// A linear system was too ill-conditioned to trust.
    #[error("ill-conditioned system: condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// A stochastic iterate left the space of finite vectors.
    #[error("divergence at step {step}: {what}")]
    Divergence { step: u64, what: String },

    /// Generic numeric failure (singular solve, eigensolver failure, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Bad run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RegMdpError>;
