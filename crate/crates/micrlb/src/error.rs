//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by deployment generation, channel evaluation, information
/// matrix assembly and the estimator.
///
/// A singular information matrix is *not* an error for bound computation;
/// [`crate::crlb::crlb_standard`] reports singularity as a state. Errors are
/// reserved for conditions that leave no meaningful result: degenerate
/// geometry, invalid parameters, failed parses.
#[derive(Debug, Error)]
pub enum MiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A link shorter than the 1e-6 m channel floor; the d⁻ⁿ model has no
    /// meaning at contact range.
    #[error("link distance {distance:.3e} m is below the 1e-6 m floor")]
    DegenerateLink { distance: f64 },

    /// Same condition, reported from graph-level code that knows node ids.
    #[error("nodes {a} and {b} are {distance:.3e} m apart, below the 1e-6 m floor")]
    CoincidentNodes { a: usize, b: usize, distance: f64 },

    /// Rejection sampling could not place a node under the separation floor.
    #[error("could not place node {node} after {attempts} rejection attempts (box too crowded)")]
    CrowdedBox { node: usize, attempts: usize },

    /// A per-axis block of the information matrix could not be inverted.
    #[error("{block} block is numerically singular (equilibrated condition number {cond:.3e})")]
    SingularBlock { block: &'static str, cond: f64 },

    /// Every Monte-Carlo trial of a sweep point produced a singular matrix.
    #[error("all {trials} trials produced singular information matrices")]
    AllTrialsSingular { trials: usize },

    #[error("estimator diverged: {0}")]
    Divergence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MiError>;
