//! Calculus and dynamics on time scales.
//!
//! The crate covers finite-segment time scales and their duals, delta and
//! nabla derivatives, delta/nabla initial value problems for control systems,
//! Filippov-style control recovery, strict-egress checks for tube constraints
//! and a lattice search for viable initial values.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod scenario;
pub mod selftest;
pub mod solver;
pub mod timescale;
pub mod viability;

pub use calculus::{dualize_function, check_derivative_duality, Mode, ScaleFunction};
pub use error::{Error, Result};
pub use expr::{Env, Expr, Var};
pub use timescale::{Kappa, PointInfo, TimeScale};
pub use dynamics::{recover_control, ControlSet, ControlSystem, FixedDynamics};
pub use scenario::Scenario;
pub use solver::{solve_delta_ivp, solve_nabla_ivp_direct, solve_nabla_via_duality, SolveOptions, Trajectory};
pub use viability::{check_egress, search_viable, EgressReport, EgressSampling, Face, SearchOptions, Side, Tube, ViabilityProblem, ViabilityResult};
