//! Smoothed online optimization for target tracking.
//!
//! An agent picks `x_t` each slot and pays a windowed tracking cost against a
//! public target `tau_t`, an adversarial cost against a hidden target `u_t`
//! that is revealed only after acting, and a quadratic switching cost. This
//! crate provides the cost model, the per-step and full-horizon solvers, the
//! online policies (IGA, BEST, naive greedy, PGA, CoRT), prediction sources,
//! instance generators, bound calculators and the experiment runner behind
//! the `soott` binary.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod predictors;
pub mod solvers;
pub mod vector;

pub use error::{Error, Result};
pub use model::{
    AdversarialFunction, CostBreakdown, DomainBox, HistoryBuffer, Instance, ProblemParams,
    RunResult,
};
pub use solvers::{SolverSettings, StepProblem, StepRule};
