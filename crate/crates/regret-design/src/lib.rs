//! Minimax-regret experimental design.
//!
//! Tools for choosing which experiment(s) to run, how to split a sample
//! budget across arms, and how to shrink experimental estimates toward
//! observational evidence whose bias is unknown at design time. A design
//! is judged by its adaptation regret: the worst case, over the unknown
//! bias radius, of its worst-case mean-squared error relative to an
//! oracle that knows the radius and picks both the design and the
//! estimator. That worst case collapses to the maximum of a variance
//! ratio and a bias ratio, which is what the solver minimizes.
//!
//! The crate also covers the moment-selection (GMM) generalization with
//! arbitrary bias norms, confidence-interval-length regret for partially
//! identified targets, a bounded-bias variant, independent brute-force
//! oracles and a seeded simulation harness for verification, and builders
//! replicating two worked applications (a cash-transfer design problem
//! and an experimental site-selection problem).

pub mod apps;
pub mod ci;
pub mod error;
pub mod files;
pub mod gmm;
pub mod model;
pub mod qp;
pub mod regret;
pub mod rng;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    DesignProblem, ExperimentArm, FeasibilitySet, GammaPolicy, NormSpec, ObservationalEvidence,
    SensitivityVector,
};
pub use regret::{
    compute_alpha, compute_beta, neyman_allocation, oracle_alpha_star, oracle_beta_star, regret,
    Binding, EffectiveShrinkage, RegretBreakdown,
};
pub use solver::{inner_solve, neyman_design, solve, solve_bounded, DesignSolution};
