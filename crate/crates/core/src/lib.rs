//! Conservative reliability assessment for on-demand software.
//!
//! An assessor who can only justify interval probabilities for the
//! failure-probability parameter works with the whole set of priors matching
//! that partial specification. This crate computes the worst-case posterior
//! predictive probability of surviving `m` future demands over that set,
//! the discrete prior attaining it, and the demand budgets needed to reach a
//! posterior reliability target — together with an independent grid oracle
//! and the uniform-prior baseline for cross-checking.

pub mod hfix;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod solver;

pub use model::{IntervalPartition, ModelError, Observation, Placement, ReliabilityTarget};
pub use planner::{PlanResult, PlannerError, PlannerOptions};
pub use solver::{
    solve, solve_fault_free, solve_general, solve_no_failure, Branch, DiscretePrior,
    FixedPointSolution, SolverError, SolverOptions,
};
