//! Error type shared by every module in the crate.

/// Errors reported by surrogate fitting, acquisition, objectives, and the
/// optimizer loops.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two values that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A value violates a documented precondition (out of bounds, non-finite,
    /// non-positive bandwidth, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two observations in a history share the same point. Noise-free
    /// interpolation cannot absorb duplicates, so fits reject them.
    #[error("duplicate training points: observations {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    /// A fit that requires gradients was given an observation without one.
    #[error("observation {index} has no gradient; the multikernel fit requires one per observation")]
    MissingGradient { index: usize },

    /// Kernel-matrix factorization failed even after jitter escalation.
    #[error("surrogate fit failed: {0}")]
    FitFailure(String),

    /// Tag filtering left no metalearning records to build an EPDF from.
    /// Callers fall back to the plain acquisition (rate = 0).
    #[error("no metalearning records remain after tag filtering")]
    EmptyMeta,

    /// An objective evaluation could not produce a loss.
    #[error("objective evaluation failed: {0}")]
    EvaluationFailed(String),

    /// Every challenger in an epoch failed to evaluate.
    #[error("all challengers failed to evaluate")]
    AllChallengersFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
