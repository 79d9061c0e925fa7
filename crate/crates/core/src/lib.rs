//! Joint bit allocation and trajectory planning for a UAV-mounted computing
//! cloudlet serving offloading mobile users.
//!
//! The planner minimizes the total energy spent by the mobile users on
//! uplink transmission, subject to a pipelined uplink/compute/downlink
//! schedule, the UAV's energy budget and its kinematic limits. The
//! non-convex problem is attacked with successive convex approximation:
//! each outer iteration builds convex surrogates around the current plan,
//! solves the resulting convex program with an interior-point method and
//! moves a damped step toward its solution.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod energy;
pub mod output;
pub mod plan;
pub mod sca;
pub mod scenario;
pub mod solver;
pub mod subproblem;
pub mod surrogate;
mod units;

pub use energy::EnergyLedger;
pub use plan::{FrameBitAlloc, PlanVariables, Trajectory, Var};
pub use sca::{run, ConvergenceTrace, PlanResult, ScaConfig, Termination};
pub use scenario::{Access, FlightModel, Scenario};
