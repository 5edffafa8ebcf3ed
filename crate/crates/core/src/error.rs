use thiserror::Error;

use crate::stats::Estimate;

/// Errors raised by the percolation laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments: out-of-range probabilities, inverted radii, wrong lattice family.
    #[error("input error: {0}")]
    Input(String),

    /// Exact enumeration refused because the region has too many edges.
    #[error("edge cap exceeded: region has {edges} edges, enumeration cap is {cap}")]
    CapExceeded { edges: usize, cap: usize },

    /// Rejection sampling accepted too few samples.
    #[error("conditioning starvation: {accepted} accepted of {samples} samples (need {required})")]
    Starvation {
        accepted: u64,
        samples: u64,
        required: u64,
        partial: Box<Estimate>,
    },

    /// A universal property of a construction failed. Always a bug.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// No tested scale met the target before the search limit.
    #[error("scale search failed: best n = {best_n} with bound {best_bound:.4} (target {target})")]
    ScaleSearchFailed {
        best_n: u32,
        best_bound: f64,
        target: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return input(format!("probability {p} outside [0,1]"));
    }
    Ok(())
}
