//! Crate-wide error type. The CLI maps these onto its exit-code contract.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input shapes disagree (vector lengths, tensor dimensions, ragged data).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A documented operation precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Requested family size exceeds the Hurwitz-Radon bound.
    #[error("infeasible: {count} matrices of size {n} requested, bound is {bound}")]
    Infeasible { n: usize, count: usize, bound: usize },

    /// Function fails a structural hypothesis (e.g. not multiaffine).
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Exponent fit has too few usable profile points.
    #[error("fit error: {0}")]
    Fit(String),

    /// Input file violates its schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// Requested grid cannot resolve the configured sets.
    #[error("resolution error: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
