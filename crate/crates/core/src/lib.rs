//! Desk-scale library for optimistic bilevel optimization.
//!
//! The centerpiece is a lifted reformulation of the bilevel problem in the
//! variables `(x, y, u, alpha, lambda)`: the lower-level constraint is
//! penalized through a point-to-set distance, near-optimality of `y` is
//! enforced against a penalty value function over a cut set, and the penalty
//! parameters follow user-declared growth schedules in the accuracy index
//! `nu`. Problems are stated over finite grids, so every inner infimum is an
//! exact enumeration and solver output can be audited against brute force.
//!
//! Modules:
//! - [`expr`]: arithmetic expression language for objectives and constraints.
//! - [`geometry`]: norms, sets, point-to-set distances, minimal corrections.
//! - [`model`]: problem data, approximation families, parameter schedules.
//! - [`lowerlevel`]: value functions and feasibility of the original problem.
//! - [`calmness`]: penalty-threshold certification of the value function.
//! - [`solver`]: exact enumeration master and the outer approximation loop.
//! - [`baselines`]: naive substitution baseline and brute-force oracle.
//! - [`harness`]: problem files, `nu`-sweeps, convergence reports.
//! - [`fixtures`]: seeded random instances for tests and demos.

pub mod baselines;
pub mod calmness;
pub mod expr;
pub mod fixtures;
pub mod geometry;
pub mod harness;
pub mod lowerlevel;
pub mod model;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use expr::ExprAst;
pub use geometry::{GridSpec, Interval, Norm, SetSpec};
pub use lowerlevel::ExtendedReal;
pub use model::{ApproximationFamily, BilevelProblem, ParameterSchedule, StabilizedInstance};
pub use solver::{OaTrace, SolveRecord};
