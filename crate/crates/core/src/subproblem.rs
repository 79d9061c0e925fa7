//! Assembly of the strongly convex inner program around an anchor iterate.
//!
//! Solver variables are normalized (see [`crate::surrogate`]) and ordered
//! frame by frame so the Newton systems stay banded. Per-user bits are
//! carried as cumulative sums over each pipeline window: the totals become
//! fixed last entries, nonnegativity becomes monotonicity and the pipeline
//! constraints become comparisons between entries of the same index.
//! Quantities that are fixed (endpoints, boundary velocities, pinned
//! variables, out-of-window bits) are substituted as constants.

use std::sync::Arc;

use crate::energy::{channel_gain, comm_energy_noma, EnergyError, Link};
use crate::plan::{PlanVariables, Units, Var};
use crate::scenario::{Access, FlightModel, Scenario};
use crate::solver::{self, Affine, HalfSquares, Inequality, IpmOptions, KktSolution, Program, SolveError, Term};
use crate::surrogate::{self, Surrogate, TAU_MIN};

/// Knobs of the inner program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Proximal weight in normalized units.
    pub prox: f64,
    /// Hold every bit variable at its anchor value.
    pub pin_bits: bool,
    /// Hold the trajectory (and Model 2 states and slacks) at the anchor.
    pub pin_trajectory: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { prox: 1e-6, pin_bits: false, pin_trajectory: false }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("anchor does not match the variant: {0}")]
    AnchorShape(String),
    #[error("fixed quantities violate `{0}`")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Up,
    Comp,
    Down,
}

impl Stage {
    const ALL: [Stage; 3] = [Stage::Up, Stage::Comp, Stage::Down];

    /// Frame of window index 0.
    fn offset(self) -> usize {
        match self {
            Stage::Up => 0,
            Stage::Comp => 1,
            Stage::Down => 2,
        }
    }

    fn idx(self) -> usize {
        self as usize
    }

    fn var(self, k: usize, n: usize) -> Var {
        match self {
            Stage::Up => Var::Uplink { k, n },
            Stage::Comp => Var::Compute { k, n },
            Stage::Down => Var::Downlink { k, n },
        }
    }
}

/// What a solver variable stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    /// Cumulative bits of a stage through window index m.
    Cum { stage: Stage, k: usize, m: usize },
    Plain(Var),
}

/// The inner convex program plus the map back to plan variables.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub program: Program,
    slots: Vec<Slot>,
    /// [stage][k][m] cumulative bits in units of BΔ.
    cum: Vec<Vec<Vec<Affine>>>,
    /// Normalized value of every non-bit plan variable.
    plain: std::collections::BTreeMap<Var, Affine>,
    anchor: PlanVariables,
    units: Units,
    frames: usize,
    natural: usize,
}

impl ConvexSubproblem {
    pub fn num_vars(&self) -> usize {
        self.program.num_vars
    }

    /// Number of plan variables before any are fixed.
    pub fn natural_count(&self) -> usize {
        self.natural
    }

    /// Normalized affine expression of a plan variable in solver variables.
    pub fn affine(&self, v: Var) -> Affine {
        let (stage, k, n) = match v {
            Var::Uplink { k, n } => (Stage::Up, k, n),
            Var::Compute { k, n } => (Stage::Comp, k, n),
            Var::Downlink { k, n } => (Stage::Down, k, n),
            other => return self.plain[&other].clone(),
        };
        let w = self.frames - 2;
        if n < stage.offset() || n >= stage.offset() + w {
            return Affine::constant(0.0);
        }
        let m = n - stage.offset();
        let row = &self.cum[stage.idx()][k];
        let mut a = row[m].clone();
        if m > 0 {
            a.add_scaled(&row[m - 1], -1.0);
        }
        a
    }

    /// Solver vector corresponding to a plan.
    pub fn pack(&self, z: &PlanVariables) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| match *slot {
                Slot::Cum { stage, k, m } => {
                    let off = stage.offset();
                    (off..=off + m).map(|n| z.get(stage.var(k, n))).sum::<f64>() / self.units.bits
                }
                Slot::Plain(v) => z.get(v) / self.units.scale(v),
            })
            .collect()
    }

    /// Plan corresponding to a solver vector.
    pub fn unpack(&self, x: &[f64]) -> PlanVariables {
        let mut z = self.anchor.clone();
        for v in self.anchor.vars() {
            let a = self.affine(v);
            // Fixed quantities keep their anchor value bit for bit.
            if !a.is_constant() {
                z.set(v, a.eval(x) * self.units.scale(v));
            }
        }
        z
    }

    /// Solves the program from the anchor and maps the result back.
    pub fn solve(&self, opts: &IpmOptions) -> Result<(PlanVariables, KktSolution), SolveError> {
        let sol = solver::solve(&self.program, opts)?;
        Ok((self.unpack(&sol.x), sol))
    }
}

struct Builder<'a> {
    z: &'a PlanVariables,
    u: Units,
    opts: BuildOptions,
    slots: Vec<Slot>,
    start: Vec<f64>,
}

impl Builder<'_> {
    fn new_var(&mut self, slot: Slot, start: f64) -> Affine {
        self.slots.push(slot);
        self.start.push(start);
        Affine::var(self.slots.len() - 1)
    }

    fn plain(&mut self, v: Var, free: bool) -> Affine {
        let y = self.z.get(v) / self.u.scale(v);
        if free {
            self.new_var(Slot::Plain(v), y)
        } else {
            Affine::constant(y)
        }
    }
}

/// Completes a plan with tight slacks: α and β equal to the received and
/// transmitted NOMA energies and τ equal to the speed (floored at the
/// minimum slack). Slacks a variant does not use are left empty.
pub fn with_tight_slacks(
    s: &Scenario,
    z: &PlanVariables,
    access: Access,
    flight: FlightModel,
) -> Result<PlanVariables, EnergyError> {
    let (kk, n) = (s.num_users(), s.frames());
    let mut out = z.clone();
    out.alpha.clear();
    out.beta.clear();
    out.speed_slack.clear();
    if access == Access::NonOrthogonal {
        let r = &s.radio;
        let dt = s.frame_len();
        out.alpha = vec![vec![0.0; n]; kk];
        out.beta = vec![vec![0.0; n]; kk];
        for f in 0..n {
            let p = z.trajectory.positions[f];
            let gains: Vec<f64> =
                s.users.iter().map(|u| channel_gain(p, u, s.uav.altitude, r.ref_gain)).collect();
            let up = comm_energy_noma(&z.bits.uplink_frame(f), &gains, r.bandwidth, dt, r.noise_psd, Link::Uplink)
                .map_err(|_| EnergyError::InterferenceInfeasible { link: Link::Uplink, frame: f })?;
            let down =
                comm_energy_noma(&z.bits.downlink_frame(f), &gains, r.bandwidth, dt, r.noise_psd, Link::Downlink)
                    .map_err(|_| EnergyError::InterferenceInfeasible { link: Link::Downlink, frame: f })?;
            for k in 0..kk {
                out.alpha[k][f] = up[k] * gains[k];
                out.beta[k][f] = down[k];
            }
        }
    }
    if flight == FlightModel::Model2 {
        out.speed_slack =
            (0..n).map(|f| z.trajectory.velocities[f].iter().map(|c| c * c).sum::<f64>().sqrt().max(TAU_MIN)).collect();
    }
    Ok(out)
}

fn check_shape(z: &PlanVariables, s: &Scenario, access: Access, flight: FlightModel) -> Result<(), BuildError> {
    let (k, n) = (s.num_users(), s.frames());
    if z.bits.users() != k || z.bits.frames() != n || z.trajectory.positions.len() != n + 1 {
        return Err(BuildError::AnchorShape(format!("expected {k} users and {n} frames")));
    }
    let model2 = flight == FlightModel::Model2;
    if model2 != z.trajectory.has_dynamics() || (model2 && z.speed_slack.len() != n) {
        return Err(BuildError::AnchorShape("velocity states and speed slacks".into()));
    }
    let noma = access == Access::NonOrthogonal;
    let ok = |m: &Vec<Vec<f64>>| if noma { m.len() == k && m.iter().all(|r| r.len() == n) } else { m.is_empty() };
    if !ok(&z.alpha) || !ok(&z.beta) {
        return Err(BuildError::AnchorShape("NOMA slacks".into()));
    }
    Ok(())
}

fn term(sur: &Surrogate, sp: &ConvexSubproblem, weight: f64) -> Term {
    Term::new(sur.inputs().iter().map(|&v| sp.affine(v)).collect(), sur.local_fn(), weight)
}

fn diff(a: &Affine, b: &Affine) -> Affine {
    let mut d = a.clone();
    d.add_scaled(b, -1.0);
    d
}

/// Builds the inner program for an explicit access scheme and flight model.
pub fn build_variant(
    s: &Scenario,
    z: &PlanVariables,
    access: Access,
    flight: FlightModel,
    opts: &BuildOptions,
) -> Result<ConvexSubproblem, BuildError> {
    check_shape(z, s, access, flight)?;
    let (kk, n) = (s.num_users(), s.frames());
    let w = n - 2;
    let model2 = flight == FlightModel::Model2;
    let noma = access == Access::NonOrthogonal;
    let mut b = Builder { z, u: Units::of(s), opts: *opts, slots: Vec::new(), start: Vec::new() };
    let u = b.u;

    let mut cum = vec![vec![vec![Affine::default(); w]; kk]; 3];
    let mut plain = std::collections::BTreeMap::new();
    let mut running = vec![vec![0.0; kk]; 3];
    let free_traj = !opts.pin_trajectory;

    for f in 0..=n {
        for k in 0..kk {
            let total_in = s.users[k].input_bits / u.bits;
            for st in Stage::ALL {
                let Some(m) = f.checked_sub(st.offset()).filter(|&m| m < w) else { continue };
                running[st.idx()][k] += z.get(st.var(k, f)) / u.bits;
                let y = running[st.idx()][k];
                let last = m == w - 1;
                cum[st.idx()][k][m] = if last {
                    let total = if st == Stage::Down { s.users[k].output_ratio * total_in } else { total_in };
                    Affine::constant(total)
                } else if opts.pin_bits || total_in == 0.0 {
                    Affine::constant(y)
                } else {
                    b.new_var(Slot::Cum { stage: st, k, m }, y)
                };
            }
        }
        for axis in 0..2 {
            let v = Var::Pos { n: f, axis };
            let a = b.plain(v, free_traj && f != 0 && f != n);
            plain.insert(v, a);
        }
        if model2 {
            for axis in 0..2 {
                let v = Var::Vel { n: f, axis };
                let a = b.plain(v, free_traj && f != 0 && f != n);
                plain.insert(v, a);
            }
            if f < n {
                for axis in 0..2 {
                    let v = Var::Acc { n: f, axis };
                    let a = b.plain(v, free_traj);
                    plain.insert(v, a);
                }
                let v = Var::SpeedSlack { n: f };
                let a = b.plain(v, free_traj);
                plain.insert(v, a);
            }
        }
        if noma && f < n {
            for k in 0..kk {
                let v = Var::Alpha { k, n: f };
                let a = b.plain(v, f + 2 < n);
                plain.insert(v, if f + 2 < n { a } else { Affine::constant(0.0) });
            }
            for k in 0..kk {
                let v = Var::Beta { k, n: f };
                let a = b.plain(v, f >= 2);
                plain.insert(v, if f >= 2 { a } else { Affine::constant(0.0) });
            }
        }
    }

    let natural = 3 * kk * n
        + 2 * (n + 1)
        + if model2 { 2 * (n + 1) + 3 * n } else { 0 }
        + if noma { 2 * kk * n } else { 0 };
    let mut sp = ConvexSubproblem {
        program: Program { num_vars: b.slots.len(), start: b.start.clone(), ..Default::default() },
        slots: b.slots.clone(),
        cum,
        plain,
        anchor: z.clone(),
        units: u,
        frames: n,
        natural,
    };
    let mut objective = Vec::new();
    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    let budget_w = u.energy / s.uav.energy_budget;
    let mut budget = Inequality { terms: Vec::new(), linear: Affine::constant(-1.0), label: "energy budget".into() };
    let prox = b.opts.prox;
    let add_prox = |objective: &mut Vec<Term>, a: Affine, anchor: f64| {
        if !a.is_constant() && prox > 0.0 {
            let mut e = a;
            e.offset -= anchor;
            objective.push(Term::new(vec![e], Arc::new(HalfSquares(1)), prox));
        }
    };

    // Pipeline: monotone cumulative sums and stage ordering.
    for k in 0..kk {
        for m in 0..w {
            for st in Stage::ALL {
                let cur = &sp.cum[st.idx()][k][m];
                let step = if m == 0 { cur.clone() } else { diff(cur, &sp.cum[st.idx()][k][m - 1]) };
                if !step.is_constant() {
                    ineqs.push(Inequality::linear(step.scaled(-1.0), format!("nonnegative {st:?} bits, user {k}")));
                }
            }
            let up = &sp.cum[Stage::Up.idx()][k][m];
            let comp = &sp.cum[Stage::Comp.idx()][k][m];
            let down = &sp.cum[Stage::Down.idx()][k][m];
            let c1 = diff(comp, up);
            let c2 = diff(down, &comp.scaled(s.users[k].output_ratio));
            for (c, what) in [(c1, "compute after uplink"), (c2, "downlink after compute")] {
                if !c.is_constant() {
                    ineqs.push(Inequality::linear(c, format!("{what}, user {k}")));
                } else if c.offset > 1e-9 {
                    return Err(BuildError::Inconsistent(format!("{what}, user {k}")));
                }
            }
        }
    }

    // Objective, slack constraints and budget terms per frame.
    for f in 0..n {
        for k in 0..kk {
            let in_up = f + 2 < n;
            let in_down = f >= 2;
            if noma {
                if in_up {
                    let obj = surrogate::sur_obj_noma(s, z, k, f, prox);
                    objective.push(term(&obj, &sp, 1.0));
                    let h = surrogate::sur_h_noma(s, z, k, f);
                    let alpha = sp.affine(Var::Alpha { k, n: f });
                    ineqs.push(Inequality {
                        terms: vec![term(&h, &sp, 1.0)],
                        linear: alpha.scaled(-1.0),
                        label: format!("uplink interference, user {k}, frame {f}"),
                    });
                    ineqs.push(Inequality::linear(alpha.scaled(-1.0), format!("alpha >= 0, user {k}, frame {f}")));
                }
                if in_down {
                    let d = surrogate::sur_downlink_noma(s, z, k, f);
                    let beta = sp.affine(Var::Beta { k, n: f });
                    ineqs.push(Inequality {
                        terms: vec![term(&d, &sp, 1.0)],
                        linear: beta.scaled(-1.0),
                        label: format!("downlink interference, user {k}, frame {f}"),
                    });
                    ineqs.push(Inequality::linear(beta.scaled(-1.0), format!("beta >= 0, user {k}, frame {f}")));
                    budget.linear.add_scaled(&beta, budget_w);
                    add_prox(&mut objective, beta, z.beta[k][f] / u.energy);
                }
                let up = sp.affine(Var::Uplink { k, n: f });
                add_prox(&mut objective, up, z.bits.uplink[k][f] / u.bits);
            } else if in_up {
                let obj = surrogate::sur_uplink_oma(s, z, k, f, prox);
                objective.push(term(&obj, &sp, 1.0));
            }
            if !noma && in_down {
                let d = surrogate::sur_downlink_oma(s, z, k, f);
                budget.terms.push(term(&d, &sp, budget_w));
            }
            if (1..n - 1).contains(&f) {
                let c = surrogate::sur_comp(s, z, k, f);
                budget.terms.push(term(&c, &sp, budget_w));
            }
            let cb = sp.affine(Var::Compute { k, n: f });
            add_prox(&mut objective, cb, z.bits.compute[k][f] / u.bits);
            let db = sp.affine(Var::Downlink { k, n: f });
            add_prox(&mut objective, db, z.bits.downlink[k][f] / u.bits);
        }
        // Positions outside the uplink window are not covered by the objective.
        if f + 2 >= n {
            for axis in 0..2 {
                let v = Var::Pos { n: f, axis };
                add_prox(&mut objective, sp.affine(v), z.get(v) / u.length);
            }
        }
    }

    // Flight.
    let dt = s.frame_len();
    for f in 0..n {
        let p0 = [sp.affine(Var::Pos { n: f, axis: 0 }), sp.affine(Var::Pos { n: f, axis: 1 })];
        let p1 = [sp.affine(Var::Pos { n: f + 1, axis: 0 }), sp.affine(Var::Pos { n: f + 1, axis: 1 })];
        let step = [diff(&p1[0], &p0[0]), diff(&p1[1], &p0[1])];
        if !model2 {
            // κ‖v‖² with v = H Δq / Δ, and ‖Δq‖ ≤ v_max Δ / H.
            let c = s.uav.kappa * u.length * u.length / (dt * dt);
            budget.terms.push(Term::new(step.to_vec(), Arc::new(HalfSquares(2)), 2.0 * c / s.uav.energy_budget));
            if step.iter().any(|a| !a.is_constant()) {
                let r = s.uav.v_max * dt / u.length;
                ineqs.push(Inequality {
                    terms: vec![Term::new(step.to_vec(), Arc::new(HalfSquares(2)), 2.0 / (r * r))],
                    linear: Affine::constant(-1.0),
                    label: format!("speed limit, frame {f}"),
                });
            }
            continue;
        }
        let vel = |sp: &ConvexSubproblem, i| [sp.affine(Var::Vel { n: i, axis: 0 }), sp.affine(Var::Vel { n: i, axis: 1 })];
        let (v0, v1) = (vel(&sp, f), vel(&sp, f + 1));
        let acc = [sp.affine(Var::Acc { n: f, axis: 0 }), sp.affine(Var::Acc { n: f, axis: 1 })];
        let tau = sp.affine(Var::SpeedSlack { n: f });
        let cp = u.speed * dt / u.length;
        let ca = u.accel * dt * dt / (2.0 * u.length);
        let cv = u.accel * dt / u.speed;
        for axis in 0..2 {
            let mut e = step[axis].clone();
            e.add_scaled(&v0[axis], -cp);
            e.add_scaled(&acc[axis], -ca);
            eqs.push((e, format!("position update, frame {f}")));
            let mut e = diff(&v1[axis], &v0[axis]);
            e.add_scaled(&acc[axis], -cv);
            eqs.push((e, format!("velocity update, frame {f}")));
        }
        let fly = surrogate::sur_fly_model2(s, f);
        budget.terms.push(term(&fly, &sp, budget_w));
        if free_traj {
            ineqs.push(Inequality {
                terms: vec![Term::new(acc.to_vec(), Arc::new(HalfSquares(2)), 2.0)],
                linear: Affine::constant(-1.0),
                label: format!("acceleration limit, frame {f}"),
            });
            if f > 0 {
                ineqs.push(Inequality {
                    terms: vec![Term::new(v0.to_vec(), Arc::new(HalfSquares(2)), 2.0)],
                    linear: Affine::constant(-1.0),
                    label: format!("speed limit, frame {f}"),
                });
            }
            let mut lo = tau.scaled(-1.0);
            lo.offset += TAU_MIN / u.speed;
            ineqs.push(Inequality::linear(lo, format!("minimum speed slack, frame {f}")));
            let sb = surrogate::speed_slack_bound(s, z, f);
            ineqs.push(Inequality { terms: vec![term(&sb, &sp, 1.0)], linear: Affine::default(), label: format!("speed slack bound, frame {f}") });
            for a in acc.iter().chain(&v0).chain([&tau]) {
                if !a.is_constant() {
                    let i = a.terms[0].0;
                    add_prox(&mut objective, a.clone(), b.start[i]);
                }
            }
        }
    }
    ineqs.push(budget);

    let mut equalities = Vec::new();
    for (e, label) in eqs {
        if e.is_constant() {
            if e.offset.abs() > 1e-9 {
                return Err(BuildError::Inconsistent(label));
            }
        } else {
            equalities.push(e);
        }
    }
    sp.program.objective = objective;
    sp.program.inequalities = ineqs;
    sp.program.equalities = equalities;
    Ok(sp)
}

/// Inner program using the scenario's own access scheme and flight model.
pub fn build(s: &Scenario, z: &PlanVariables, opts: &BuildOptions) -> Result<ConvexSubproblem, BuildError> {
    build_variant(s, z, s.access, s.flight, opts)
}

pub fn build_oma_m1(s: &Scenario, z: &PlanVariables, opts: &BuildOptions) -> Result<ConvexSubproblem, BuildError> {
    build_variant(s, z, Access::Orthogonal, FlightModel::Model1, opts)
}

pub fn build_noma_m1(s: &Scenario, z: &PlanVariables, opts: &BuildOptions) -> Result<ConvexSubproblem, BuildError> {
    build_variant(s, z, Access::NonOrthogonal, FlightModel::Model1, opts)
}

pub fn build_oma_m2(s: &Scenario, z: &PlanVariables, opts: &BuildOptions) -> Result<ConvexSubproblem, BuildError> {
    build_variant(s, z, Access::Orthogonal, FlightModel::Model2, opts)
}

pub fn build_noma_m2(s: &Scenario, z: &PlanVariables, opts: &BuildOptions) -> Result<ConvexSubproblem, BuildError> {
    build_variant(s, z, Access::NonOrthogonal, FlightModel::Model2, opts)
}
