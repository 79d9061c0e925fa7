//! Outer successive-convex-approximation loop.

use crate::energy::{uav_energy_total, EnergyError, EnergyLedger};
use crate::plan::{reference_trajectory, FrameBitAlloc, PlanVariables, Units, Var};
use crate::scenario::{validate_deadline, FlightModel, Scenario, ScenarioError};
use crate::solver::{IpmOptions, SolveError};
use crate::subproblem::{build, with_tight_slacks, BuildError, BuildOptions};

/// Outer-loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaConfig {
    /// γ(v) = gamma0 / (1 + decay·v).
    pub gamma0: f64,
    pub decay: f64,
    /// Stop when ‖ẑ − z‖∞ in scaled variables falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub prox: f64,
    pub inner: IpmOptions,
    /// Step halvings allowed when a damped step would raise the exact objective.
    pub max_backtracks: usize,
    /// Keep every outer iterate in [`PlanResult::iterates`].
    pub keep_iterates: bool,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig {
            gamma0: 1.0,
            decay: 0.1,
            tol: 1e-4,
            max_iters: 200,
            prox: 1e-6,
            inner: IpmOptions::default(),
            max_backtracks: 30,
            keep_iterates: false,
        }
    }
}

impl ScaConfig {
    pub fn step(&self, v: usize) -> f64 {
        self.gamma0 / (1.0 + self.decay * v as f64)
    }
}

/// One row per solved subproblem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    /// Exact total mobile energy at the anchor, J.
    pub objective: Vec<f64>,
    /// Exact UAV energy at the anchor, J.
    pub uav_energy: Vec<f64>,
    /// ‖ẑ − z‖∞ in scaled variables, slacks excluded.
    pub step_norm: Vec<f64>,
    /// Step actually taken (0 on the final, stationary row).
    pub gamma: Vec<f64>,
    /// Largest KKT residual of the subproblem solve.
    pub residual: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }

    fn push(&mut self, objective: f64, uav: f64, step: f64, gamma: f64, residual: f64) {
        self.objective.push(objective);
        self.uav_energy.push(uav);
        self.step_norm.push(step);
        self.gamma.push(gamma);
        self.residual.push(residual);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub plan: PlanVariables,
    pub ledger: EnergyLedger,
    pub trace: ConvergenceTrace,
    pub termination: Termination,
    /// The start and every accepted iterate, when requested.
    pub iterates: Vec<PlanVariables>,
}

impl PlanResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Stationary
    }

    /// Outer iterations performed (steps taken).
    pub fn iterations(&self) -> usize {
        self.trace.gamma.iter().filter(|&&g| g > 0.0).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScaError {
    #[error(transparent)]
    Deadline(#[from] ScenarioError),
    #[error("initial plan violates the UAV energy budget by {gap:.6e} J")]
    InfeasibleStart { gap: f64 },
    #[error("initial plan cannot be evaluated: {0}")]
    Unevaluable(#[from] EnergyError),
    #[error("subproblem construction failed: {0}")]
    Build(#[from] BuildError),
    #[error("subproblem solver failed at outer iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SolveError,
        trace: Box<ConvergenceTrace>,
    },
}

/// Equal-split bits on the reference trajectory with tight slacks, checked
/// against the UAV budget.
pub fn initial_point(s: &Scenario) -> Result<PlanVariables, ScaError> {
    validate_deadline(s)?;
    let z = PlanVariables::new(FrameBitAlloc::equal_split(s), reference_trajectory(s));
    let z = with_tight_slacks(s, &z, s.access, s.flight)?;
    let ledger = uav_energy_total(s, &z.bits, &z.trajectory)?;
    if !ledger.within_budget() {
        return Err(ScaError::InfeasibleStart { gap: -ledger.budget_slack });
    }
    Ok(z)
}

/// Runs the joint optimization from [`initial_point`].
pub fn run(s: &Scenario, cfg: &ScaConfig) -> Result<PlanResult, ScaError> {
    let z = initial_point(s)?;
    run_from(s, cfg, z, BuildOptions { prox: cfg.prox, ..Default::default() })
}

/// Runs the outer loop from a feasible plan with the given pins.
pub fn run_from(
    s: &Scenario,
    cfg: &ScaConfig,
    start: PlanVariables,
    opts: BuildOptions,
) -> Result<PlanResult, ScaError> {
    let units = Units::of(s);
    let mut z = start;
    let mut ledger = uav_energy_total(s, &z.bits, &z.trajectory)?;
    let mut trace = ConvergenceTrace::default();
    let mut iterates = Vec::new();
    if cfg.keep_iterates {
        iterates.push(z.clone());
    }
    for v in 0.. {
        let sp = build(s, &z, &opts)?;
        let (target, sol) = sp
            .solve(&cfg.inner)
            .map_err(|source| ScaError::Solver { iteration: v, source, trace: Box::new(trace.clone()) })?;
        let gap = primal_gap(&target, &z, &units);
        if gap <= cfg.tol || v >= cfg.max_iters {
            trace.push(ledger.mobile_total, ledger.uav_total, gap, 0.0, sol.max_residual());
            let termination = if gap <= cfg.tol { Termination::Stationary } else { Termination::MaxIterations };
            return Ok(PlanResult { plan: z, ledger, trace, termination, iterates });
        }
        let mut gamma = cfg.step(v);
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            if let Some(next) = try_step(s, &z, &target, gamma, &ledger) {
                accepted = Some(next);
                break;
            }
            gamma *= 0.5;
        }
        trace.push(ledger.mobile_total, ledger.uav_total, gap, accepted.as_ref().map_or(0.0, |_| gamma), sol.max_residual());
        match accepted {
            Some((next, next_ledger)) => {
                if cfg.keep_iterates {
                    iterates.push(next.clone());
                }
                z = next;
                ledger = next_ledger;
            }
            // No damped step improves the exact objective: the anchor is
            // stationary up to the surrogate's resolution.
            None => {
                return Ok(PlanResult { plan: z, ledger, trace, termination: Termination::Stationary, iterates })
            }
        }
    }
    unreachable!()
}

/// Damped step with refreshed slacks, kept only if it satisfies the
/// original constraints and does not raise the exact objective.
fn try_step(
    s: &Scenario,
    z: &PlanVariables,
    target: &PlanVariables,
    gamma: f64,
    current: &EnergyLedger,
) -> Option<(PlanVariables, EnergyLedger)> {
    let mut next = z.step_toward(target, gamma);
    pin_fixed(s, &mut next);
    let next = with_tight_slacks(s, &next, s.access, s.flight).ok()?;
    let ledger = uav_energy_total(s, &next.bits, &next.trajectory).ok()?;
    let feasible = constraint_violation(s, &next) <= 1e-7;
    let descent = ledger.mobile_total <= current.mobile_total + 1e-12 * current.mobile_total.abs().max(1.0);
    (feasible && descent).then_some((next, ledger))
}

/// Restores quantities the step must not move because of rounding.
fn pin_fixed(s: &Scenario, z: &mut PlanVariables) {
    let n = s.frames();
    let b = &mut z.bits;
    for row in b.uplink.iter_mut().chain(b.compute.iter_mut()).chain(b.downlink.iter_mut()) {
        for x in row.iter_mut() {
            *x = x.max(0.0);
        }
    }
    z.trajectory.positions[0] = s.uav.start;
    z.trajectory.positions[n] = s.uav.end;
    if s.flight == FlightModel::Model2 {
        let vc = s.uav.boundary_velocity();
        z.trajectory.velocities[0] = vc;
        z.trajectory.velocities[n] = vc;
    }
}

/// ‖a − b‖∞ in scaled units over bits and trajectory. Slacks are left out:
/// they are re-tightened after every step, and in the inner solution their
/// position inside the flat region is set by the barrier, not the model.
fn primal_gap(a: &PlanVariables, b: &PlanVariables, units: &Units) -> f64 {
    a.vars()
        .into_iter()
        .filter(|v| !matches!(v, Var::SpeedSlack { .. } | Var::Alpha { .. } | Var::Beta { .. }))
        .map(|v| (a.get(v) - b.get(v)).abs() / units.scale(v))
        .fold(0.0, f64::max)
}

/// ‖ẑ(z) − z‖∞ in scaled units over bits and trajectory.
pub fn stationarity_gap(s: &Scenario, z: &PlanVariables, cfg: &ScaConfig) -> Result<f64, ScaError> {
    let sp = build(s, z, &BuildOptions { prox: cfg.prox, ..Default::default() })?;
    let (target, _) = sp
        .solve(&cfg.inner)
        .map_err(|source| ScaError::Solver { iteration: 0, source, trace: Box::default() })?;
    Ok(primal_gap(&target, z, &Units::of(s)))
}

/// Largest relative violation of the original problem's constraints at a
/// plan, with exact energies. Infinite when the plan cannot be evaluated.
pub fn constraint_violation(s: &Scenario, z: &PlanVariables) -> f64 {
    let n = s.frames();
    let w = n - 2;
    let dt = s.frame_len();
    let mut worst: f64 = 0.0;
    let mut note = |excess: f64, scale: f64| worst = worst.max(excess / scale);
    for (k, user) in s.users.iter().enumerate() {
        let total = user.input_bits;
        let scale = total.max(1.0);
        let b = &z.bits;
        for f in 0..n {
            for (x, inside) in [
                (b.uplink[k][f], f < w),
                (b.compute[k][f], (1..=w).contains(&f)),
                (b.downlink[k][f], f >= 2),
            ] {
                note(-x, scale);
                if !inside {
                    note(x.abs(), scale);
                }
            }
        }
        let (mut up, mut comp, mut down) = (0.0, 0.0, 0.0);
        for m in 0..w {
            up += b.uplink[k][m];
            comp += b.compute[k][m + 1];
            down += b.downlink[k][m + 2];
            note(comp - up, scale);
            note(down - user.output_ratio * comp, scale);
        }
        note((up - total).abs(), scale);
        note((comp - total).abs(), scale);
        note((down - user.output_ratio * total).abs(), scale);
    }
    let t = &z.trajectory;
    let len = s.uav.displacement().max(s.uav.altitude);
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    note(dist(t.positions[0], s.uav.start), len);
    note(dist(t.positions[n], s.uav.end), len);
    let vmax = s.uav.v_max;
    match s.flight {
        FlightModel::Model1 => {
            for f in 0..n {
                note(dist(t.positions[f + 1], t.positions[f]) / dt - vmax, vmax);
            }
        }
        FlightModel::Model2 => {
            let amax = s.uav.a_max;
            let vc = s.uav.boundary_velocity();
            note(dist(t.velocities[0], vc), vmax);
            note(dist(t.velocities[n], vc), vmax);
            for f in 0..=n {
                note(t.velocities[f][0].hypot(t.velocities[f][1]) - vmax, vmax);
            }
            for f in 0..n {
                let (p, v, a) = (t.positions[f], t.velocities[f], t.accelerations[f]);
                note(a[0].hypot(a[1]) - amax, amax);
                let pn = [p[0] + v[0] * dt + 0.5 * a[0] * dt * dt, p[1] + v[1] * dt + 0.5 * a[1] * dt * dt];
                note(dist(pn, t.positions[f + 1]), len);
                let vn = [v[0] + a[0] * dt, v[1] + a[1] * dt];
                note(dist(vn, t.velocities[f + 1]), vmax);
            }
        }
    }
    match uav_energy_total(s, &z.bits, &z.trajectory) {
        Ok(led) => note(-led.budget_slack, s.uav.energy_budget),
        Err(_) => return f64::INFINITY,
    }
    worst
}
