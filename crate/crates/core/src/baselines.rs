//! Reference schemes the joint optimization is compared against.

use std::fmt;
use std::str::FromStr;

use crate::energy::{mobile_execution_energy, uav_energy_total};
use crate::plan::{reference_trajectory, FrameBitAlloc, PlanVariables};
use crate::sca::{initial_point, run_from, ConvergenceTrace, PlanResult, ScaConfig, ScaError, Termination};
use crate::scenario::Scenario;
use crate::subproblem::{with_tight_slacks, BuildOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Bits and trajectory optimized together.
    Joint,
    /// Bits optimized on the straight-line trajectory.
    BitOnly,
    /// Trajectory optimized with equal-split bits.
    TrajectoryOnly,
    NoOptimization,
    /// No offloading: every user computes locally.
    MobileExecution,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::Joint, Scheme::BitOnly, Scheme::TrajectoryOnly, Scheme::NoOptimization, Scheme::MobileExecution];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Joint => "joint",
            Scheme::BitOnly => "bit",
            Scheme::TrajectoryOnly => "traj",
            Scheme::NoOptimization => "noopt",
            Scheme::MobileExecution => "mobile",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected joint, bit, traj, noopt or mobile)"))
    }
}

/// Runs one scheme on a scenario.
pub fn run_scheme(s: &Scenario, scheme: Scheme, cfg: &ScaConfig) -> Result<PlanResult, ScaError> {
    match scheme {
        Scheme::Joint => crate::sca::run(s, cfg),
        Scheme::BitOnly => bit_only(s, cfg),
        Scheme::TrajectoryOnly => trajectory_only(s, cfg),
        Scheme::NoOptimization => no_optimization(s),
        Scheme::MobileExecution => Ok(mobile_execution(s)),
    }
}

fn fixed(plan: PlanVariables, ledger: crate::EnergyLedger) -> PlanResult {
    let mut trace = ConvergenceTrace::default();
    trace.objective.push(ledger.mobile_total);
    trace.uav_energy.push(ledger.uav_total);
    trace.step_norm.push(0.0);
    trace.gamma.push(0.0);
    trace.residual.push(0.0);
    PlanResult { plan, ledger, trace, termination: Termination::Stationary, iterates: Vec::new() }
}

/// Local execution by every user. The UAV still flies the reference
/// trajectory; its flying energy is reported for reference.
pub fn mobile_execution(s: &Scenario) -> PlanResult {
    let bits = FrameBitAlloc::zeros(s.num_users(), s.frames());
    let plan = PlanVariables::new(bits, reference_trajectory(s));
    let local = mobile_execution_energy(&s.users, s.deadline());
    let mut ledger = match uav_energy_total(s, &plan.bits, &plan.trajectory) {
        Ok(l) => l,
        // Only a zero-speed Model 2 frame can fail here; report no flight.
        Err(_) => crate::EnergyLedger {
            mobile_total: 0.0,
            uplink: vec![0.0; s.frames()],
            compute: vec![0.0; s.frames()],
            downlink: vec![0.0; s.frames()],
            fly: vec![0.0; s.frames()],
            mobile_per_user: vec![0.0; s.num_users()],
            uav_total: 0.0,
            budget_slack: s.uav.energy_budget,
        },
    };
    ledger.mobile_total = local.total;
    ledger.mobile_per_user = local.per_user;
    fixed(plan, ledger)
}

/// Equal-split bits on the reference trajectory. The budget is evaluated
/// but not enforced.
pub fn no_optimization(s: &Scenario) -> Result<PlanResult, ScaError> {
    let plan = PlanVariables::new(FrameBitAlloc::equal_split(s), reference_trajectory(s));
    let plan = with_tight_slacks(s, &plan, s.access, s.flight)?;
    let ledger = uav_energy_total(s, &plan.bits, &plan.trajectory)?;
    Ok(fixed(plan, ledger))
}

/// SCA over the bits with the trajectory held on the reference path.
pub fn bit_only(s: &Scenario, cfg: &ScaConfig) -> Result<PlanResult, ScaError> {
    let z = initial_point(s)?;
    run_from(s, cfg, z, BuildOptions { prox: cfg.prox, pin_trajectory: true, ..Default::default() })
}

/// SCA over the trajectory with the bits held at the equal split.
pub fn trajectory_only(s: &Scenario, cfg: &ScaConfig) -> Result<PlanResult, ScaError> {
    let z = initial_point(s)?;
    run_from(s, cfg, z, BuildOptions { prox: cfg.prox, pin_bits: true, ..Default::default() })
}
