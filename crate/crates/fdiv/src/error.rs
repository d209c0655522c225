//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of a function.
    #[error("{what}: {value} is outside {bound}")]
    Domain {
        what: &'static str,
        value: f64,
        bound: String,
    },

    /// The optimal variational value is undefined on a cell where exactly one
    /// of (p, q) vanishes; callers fall back to the closed-form edge
    /// conventions instead.
    #[error("optimal variational value undefined for cell (p={p}, q={q}); use the closed-form edge convention")]
    ZeroCell { p: f64, q: f64 },

    /// A construction-time constraint was violated (noise rates, priors, ...).
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Shapes of two objects do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A probability table failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The decoupling identity is only defined for binary, uniform
    /// off-diagonal and sparse-pair transition structures.
    #[error("unsupported transition structure: {0}")]
    UnsupportedStructure(String),

    /// Exhaustive classifier enumeration would exceed the hard bound.
    #[error("enumeration bound exceeded: {requested:e} classifiers > {bound:e}")]
    EnumerationBound { requested: f64, bound: f64 },

    /// An I/O failure, annotated with the path involved.
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    /// A file or string could not be parsed.
    #[error("parse error ({context}): {message}")]
    Parse { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
