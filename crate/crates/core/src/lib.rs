//! Binary sensor-placement design for linear Gaussian inverse problems.
//!
//! The combinatorial problem `min_xi J(xi)` over binary designs is replaced
//! by minimizing the expected objective under an independent Bernoulli
//! policy, `E_{xi ~ P(.|theta)}[J(xi)]`, over `theta in [0, 1]^n`. The
//! expectation is minimized with projected stochastic gradient descent using
//! score-function gradient estimates, optionally with a variance-reducing
//! baseline. Small instances can be solved exactly by enumeration, which is
//! also how every estimator in this crate is checked.
//!
//! Modules:
//! - [`policy`]: Bernoulli PMF, derivatives, score, sampling.
//! - [`bayes`]: the linear Gaussian inverse problem and its posterior.
//! - [`objective`]: design criteria, penalties and the memoizing evaluator.
//! - [`optimizer`]: baselines, projection and the descent loop.
//! - [`oracle`]: brute-force enumeration and exact policy quantities.
//! - [`models`]: the toy problem and the advection-diffusion surrogate.
//! - [`container`]: text import/export of problems.

pub mod bayes;
pub mod container;
pub mod error;
pub mod models;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod policy;
pub mod rng;

pub use bayes::{InverseProblem, PosteriorSummary};
pub use error::{Error, Result};
pub use objective::{
    Criterion, DesignObjective, EvaluationCache, FnObjective, Objective, ObjectiveSpec, PenaltyKind,
};
pub use optimizer::{
    estimate_gradient, optimize, BaselineMode, GradientEstimate, OptimizerConfig, ProjectionMode, RunRecord, StepSchedule, StopReason,
    StopRule,
};
pub use oracle::{brute_force, EnumerationResult, ExactOracle};
pub use policy::{DesignKey, DesignVector, PolicyParameter};
