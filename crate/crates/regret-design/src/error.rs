//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by problem validation, the solvers, and the oracles.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A sensitivity entry is zero (or not finite); every coordinate must
    /// move the target.
    #[error("sensitivity vector entry {index} is {value}; every entry must be finite and nonzero")]
    ZeroSensitivity { index: usize, value: f64 },

    /// The observational covariance has an eigenvalue below the PSD floor.
    #[error("observational covariance is not positive semi-definite (min eigenvalue {min_eig:.3e})")]
    NonPsdCovariance { min_eig: f64 },

    /// Two inputs that must share a dimension do not.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An explicit feasibility list was empty after deduplication.
    #[error("feasibility set is empty")]
    EmptyFeasibilitySet,

    /// Budget must be strictly positive and finite.
    #[error("budget must be strictly positive and finite, got {0}")]
    NonpositiveBudget(f64),

    /// Enumerating all designs would exceed the configured cap.
    #[error("design enumeration of 2^{p} exceeds cap 2^{cap_log2}")]
    EnumerationTooLarge { p: usize, cap_log2: u32 },

    /// Neyman allocation needs at least one arm with positive effective
    /// shrinkage.
    #[error("no active arm: effective shrinkage is zero everywhere")]
    NoActiveArm,

    /// The bias constraint cannot be met by any shrinkage choice for this
    /// design; its regret is +infinity.
    #[error("design {design} cannot attain the oracle bias of zero; regret is infinite")]
    Infeasible { design: String },

    /// Bisection failed to certify the minimax factor.
    #[error("bisection did not converge after {0} steps")]
    NonConvergence(usize),

    /// Every feasible design has infinite regret.
    #[error("every feasible design has infinite regret")]
    AllInfeasible,

    /// The GMM normal matrix Lambda' W Lambda is singular or too
    /// ill-conditioned to invert.
    #[error("normal matrix is singular or ill-conditioned (condition number {cond:.3e})")]
    SingularNormalMatrix { cond: f64 },

    /// Exact sign-vertex enumeration is capped.
    #[error("dual-norm vertex enumeration over 2^{m} sign patterns exceeds cap m <= {cap}")]
    VertexEnumerationTooLarge { m: usize, cap: usize },

    /// A moment model needs at least one (W, Sigma) candidate.
    #[error("candidate set is empty")]
    EmptyCandidateSet,

    /// Manski bounds need a nondegenerate assignment probability.
    #[error("treatment assignment probability must lie strictly in (0,1), got {0}")]
    DegenerateAssignment(f64),

    /// The wage-block denominator of the equilibrium map vanished.
    #[error("singular denominator: -theta3 - d = {0:.3e}")]
    SingularDenominator(f64),

    /// A brute-force grid would be too large to scan.
    #[error("grid scan of {points:.3e} evaluations exceeds cap {cap:.3e}")]
    GridTooLarge { points: f64, cap: f64 },

    /// Generic invalid argument with context.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
