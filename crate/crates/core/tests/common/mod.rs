#![allow(clippy::needless_range_loop)]

#![allow(dead_code)]

use rand::Rng;
use uav_cloudlet::plan::{FrameBitAlloc, PlanVariables, Trajectory, Var};
use uav_cloudlet::scenario::{Access, FlightModel, Scenario, TableTwo};
use uav_cloudlet::surrogate::{self, Surrogate, SurrogateKind};

pub const FRAMES: usize = 6;
pub const FRAME: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    UplinkOma,
    Comp,
    DownlinkOma,
    ObjNoma,
    HNoma,
    DownlinkNoma,
    FlyModel2,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::UplinkOma,
        Family::Comp,
        Family::DownlinkOma,
        Family::ObjNoma,
        Family::HNoma,
        Family::DownlinkNoma,
        Family::FlyModel2,
    ];
}

/// Three users at random ground positions, six 45 ms frames.
pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let pos: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect();
    TableTwo::scenario(
        &pos,
        &[4e6, 6e6, 2e6],
        0.27,
        FRAMES,
        rng.gen_range(-10.0..0.0),
        [0.0, 0.0],
        [5.0, 0.0],
        2.22,
        Access::NonOrthogonal,
        FlightModel::Model2,
    )
    .unwrap()
}

fn bit_unit(s: &Scenario) -> f64 {
    s.radio.bandwidth * s.frame_len()
}

fn noise_unit(s: &Scenario) -> f64 {
    s.radio.noise_psd * bit_unit(s)
}

fn energy_unit(s: &Scenario) -> f64 {
    noise_unit(s) * s.uav.altitude.powi(2) / s.radio.ref_gain
}

/// A plan with every variable the surrogates read filled at random.
pub fn random_plan(s: &Scenario, rng: &mut impl Rng) -> PlanVariables {
    let (k, n) = (s.num_users(), s.frames());
    let bu = bit_unit(s);
    let mut bits = FrameBitAlloc::zeros(k, n);
    for row in bits.uplink.iter_mut().chain(bits.compute.iter_mut()).chain(bits.downlink.iter_mut()) {
        for b in row.iter_mut() {
            *b = rng.gen_range(0.01..0.3) * bu;
        }
    }
    let positions = (0..=n).map(|_| [rng.gen_range(-5.0..15.0), rng.gen_range(-5.0..15.0)]).collect();
    let velocities: Vec<[f64; 2]> =
        (0..=n).map(|_| [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)]).collect();
    let accelerations = (0..n).map(|_| [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)]).collect();
    let speed_slack = velocities[..n].iter().map(|v| v[0].hypot(v[1])).collect();
    let mut z = PlanVariables::new(bits, Trajectory { positions, velocities, accelerations });
    z.alpha = (0..k).map(|_| (0..n).map(|_| rng.gen_range(0.0..3.0) * noise_unit(s)).collect()).collect();
    z.beta = (0..k).map(|_| (0..n).map(|_| rng.gen_range(0.0..3.0) * energy_unit(s)).collect()).collect();
    z.speed_slack = speed_slack;
    z
}

pub fn build(f: Family, s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> Surrogate {
    match f {
        Family::UplinkOma => surrogate::sur_uplink_oma(s, z, k, n, 1e-6),
        Family::Comp => surrogate::sur_comp(s, z, k, n),
        Family::DownlinkOma => surrogate::sur_downlink_oma(s, z, k, n),
        Family::ObjNoma => surrogate::sur_obj_noma(s, z, k, n, 1e-6),
        Family::HNoma => surrogate::sur_h_noma(s, z, k, n),
        Family::DownlinkNoma => surrogate::sur_downlink_noma(s, z, k, n),
        Family::FlyModel2 => surrogate::sur_fly_model2(s, n),
    }
}

fn path_loss(s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> f64 {
    let p = z.trajectory.positions[n];
    let m = s.users[k].position;
    s.uav.altitude.powi(2) + (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)
}

/// The original energy term each family models, written out in SI units.
pub fn exact(f: Family, s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> f64 {
    let kk = s.num_users() as f64;
    let bu = bit_unit(s);
    let n0b = s.radio.noise_psd * s.radio.bandwidth;
    let dt = s.frame_len();
    let g0 = s.radio.ref_gain;
    let others = (0..s.num_users()).filter(|&j| j != k);
    match f {
        Family::UplinkOma => {
            n0b * dt / kk * path_loss(s, z, k, n) / g0 * ((kk * z.bits.uplink[k][n] / bu).exp2() - 1.0)
        }
        Family::DownlinkOma => {
            n0b * dt / kk * path_loss(s, z, k, n) / g0 * ((kk * z.bits.downlink[k][n] / bu).exp2() - 1.0)
        }
        Family::Comp => {
            let load: f64 = s.users.iter().enumerate().map(|(j, u)| u.cycles_per_bit * z.bits.compute[j][n]).sum();
            s.uav.capacitance * s.users[k].cycles_per_bit * z.bits.compute[k][n] * load * load / (dt * dt)
        }
        Family::ObjNoma => z.alpha[k][n] * path_loss(s, z, k, n) / g0,
        Family::HNoma => {
            let i: f64 = others.map(|j| z.alpha[j][n]).sum();
            (n0b * dt + i) * ((z.bits.uplink[k][n] / bu).exp2() - 1.0)
        }
        Family::DownlinkNoma => {
            let i: f64 = others.map(|j| z.beta[j][n]).sum();
            (n0b * dt * path_loss(s, z, k, n) / g0 + i) * ((z.bits.downlink[k][n] / bu).exp2() - 1.0)
        }
        Family::FlyModel2 => {
            let v = z.trajectory.velocities[n];
            let a = z.trajectory.accelerations[n];
            let sv = v[0].hypot(v[1]);
            let aa = a[0] * a[0] + a[1] * a[1];
            let u = &s.uav;
            u.kappa1 * sv.powi(3) + u.kappa2 / sv * (1.0 + aa / (u.gravity * u.gravity))
        }
    }
}

/// A random point near `z` in the surrogate's domain: bits and slacks stay
/// nonnegative, and the speed slack stays in (0, ‖v‖].
pub fn perturb(sur: &Surrogate, z: &PlanVariables, radius: f64, rng: &mut impl Rng) -> PlanVariables {
    let mut q = z.clone();
    for (&v, &sc) in sur.inputs().iter().zip(sur.scales()) {
        let x = z.get(v) + sc * radius * rng.gen_range(-1.0..1.0);
        let x = match v {
            Var::Pos { .. } | Var::Vel { .. } | Var::Acc { .. } => x,
            _ => x.max(0.0),
        };
        q.set(v, x);
    }
    if let Some(&Var::SpeedSlack { n }) = sur.inputs().last() {
        let v = q.trajectory.velocities[n];
        let speed = v[0].hypot(v[1]);
        q.speed_slack[n] = speed * rng.gen_range(0.05..=1.0);
    }
    q
}

/// What one anchor contributed to the family checks.
#[derive(Debug, Default, Clone, Copy)]
pub struct CaseReport {
    pub tightness: f64,
    pub gradient: f64,
    pub dominance_violations: usize,
    pub convexity_violations: usize,
}

/// Tightness, gradient consistency, dominance (constraint-type only) and
/// midpoint convexity of one random anchor.
pub fn check_case(f: Family, rng: &mut impl Rng, queries: usize) -> CaseReport {
    let s = random_scenario(rng);
    let z = random_plan(&s, rng);
    let k = rng.gen_range(0..s.num_users());
    let n = FRAME;
    let sur = build(f, &s, &z, k, n);
    let orig = exact(f, &s, &z, k, n);

    // The product model counts the anchor product twice; its value at the
    // anchor exceeds the original by exactly that constant.
    let target = match sur.kind() {
        SurrogateKind::Objective => 2.0 * orig,
        SurrogateKind::Constraint => orig,
    };
    let tightness = (sur.value(&z) - target).abs() / target.abs().max(f64::MIN_POSITIVE);

    let g = sur.gradient(&z);
    let mut fd = Vec::new();
    let mut an = Vec::new();
    for (i, (&v, &sc)) in sur.inputs().iter().zip(sur.scales()).enumerate() {
        if matches!(v, Var::SpeedSlack { .. }) {
            continue;
        }
        let h = 1e-6 * sc;
        let mut zp = z.clone();
        zp.set(v, z.get(v) + h);
        let mut zm = z.clone();
        zm.set(v, z.get(v) - h);
        fd.push(sc * (exact(f, &s, &zp, k, n) - exact(f, &s, &zm, k, n)) / (2.0 * h));
        let mut gi = g[i];
        // τ tracks ‖v‖ in the original; chain it into the velocity partials.
        if let Var::Vel { n: m, axis } = v {
            let vel = z.trajectory.velocities[m];
            gi += g[sur.inputs().len() - 1] * vel[axis] / vel[0].hypot(vel[1]);
        }
        an.push(sc * gi);
    }
    let gmax = fd.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let gradient = fd.iter().zip(&an).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / gmax;

    let mut dominance_violations = 0;
    let mut convexity_violations = 0;
    for i in 0..queries {
        let radius = [0.01, 0.1, 0.5][i % 3];
        let q1 = perturb(&sur, &z, radius, rng);
        let q2 = perturb(&sur, &z, radius, rng);
        if sur.kind() == SurrogateKind::Constraint {
            for q in [&q1, &q2] {
                let (a, b) = (sur.value(q), exact(f, &s, q, k, n));
                if a < b - 1e-12 * a.abs().max(b.abs()) {
                    dominance_violations += 1;
                }
            }
        }
        let mut mid = q1.clone();
        for &v in sur.inputs() {
            mid.set(v, 0.5 * (q1.get(v) + q2.get(v)));
        }
        let (a, b, c) = (sur.value(&q1), sur.value(&q2), sur.value(&mid));
        if c > 0.5 * (a + b) + 1e-12 * a.abs().max(b.abs()) {
            convexity_violations += 1;
        }
    }
    CaseReport { tightness, gradient, dominance_violations, convexity_violations }
}

/// A strictly convex QP with a planted solution.
pub struct PlantedQp {
    pub program: uav_cloudlet::solver::Program,
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// Rows (a, b) of a·x ≤ b.
    pub ineq: Vec<(Vec<f64>, f64)>,
    /// Rows (e, d) of e·x = d.
    pub eq: Vec<(Vec<f64>, f64)>,
    pub active: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random Q ≻ 0, random constraints with a chosen active set, and c chosen
/// so that a random point satisfies the KKT conditions with positive
/// multipliers on the active rows. The start point is strictly interior.
pub fn planted_qp(rng: &mut impl Rng) -> PlantedQp {
    use std::sync::Arc;
    use uav_cloudlet::solver::{Affine, Inequality, Program, Quadratic, Term};

    let n = rng.gen_range(2..=12);
    let p = rng.gen_range(0..=n.min(3) - 1);
    let m = rng.gen_range(0..=10);
    let n_active = rng.gen_range(0..=m.min(n - p));
    let vec_n = |rng: &mut dyn rand::RngCore| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();

    let mm: Vec<Vec<f64>> = (0..n).map(|_| vec_n(rng)).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|r| mm[r][i] * mm[r][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }).collect())
        .collect();
    let x_star: Vec<f64> = vec_n(rng).iter().map(|v| 3.0 * v).collect();
    let x0: Vec<f64> = vec_n(rng).iter().map(|v| 3.0 * v).collect();
    let d: Vec<f64> = x_star.iter().zip(&x0).map(|(a, b)| a - b).collect();

    let mut ineq = Vec::with_capacity(m);
    for i in 0..m {
        let mut a = vec_n(rng);
        let b = if i < n_active {
            // Orient the row so the start is strictly inside.
            let mut t = dot(&a, &d);
            while t.abs() < 0.1 {
                a = vec_n(rng);
                t = dot(&a, &d);
            }
            if t < 0.0 {
                a.iter_mut().for_each(|v| *v = -*v);
            }
            dot(&a, &x_star)
        } else {
            let gap = rng.gen_range(0.1..2.0);
            dot(&a, &x_star).max(dot(&a, &x0)) + gap
        };
        ineq.push((a, b));
    }
    let eq: Vec<(Vec<f64>, f64)> = (0..p)
        .map(|_| {
            let e = vec_n(rng);
            let d = dot(&e, &x_star);
            (e, d)
        })
        .collect();
    let lambda: Vec<f64> = (0..n_active).map(|_| rng.gen_range(0.1..3.0)).collect();
    let nu: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = dot(&q[i], &x_star);
            for (k, l) in lambda.iter().enumerate() {
                g += l * ineq[k].0[i];
            }
            for (k, v) in nu.iter().enumerate() {
                g += v * eq[k].0[i];
            }
            -g
        })
        .collect();

    let flat_q = q.iter().flatten().copied().collect();
    let program = Program {
        num_vars: n,
        objective: vec![Term::new(
            (0..n).map(Affine::var).collect(),
            Arc::new(Quadratic { q: flat_q, c: c.clone() }),
            1.0,
        )],
        objective_linear: Affine::default(),
        inequalities: ineq
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                Inequality::linear(
                    Affine { terms: a.iter().copied().enumerate().collect(), offset: -b },
                    format!("row {i}"),
                )
            })
            .collect(),
        equalities: eq
            .iter()
            .map(|(e, d)| Affine { terms: e.iter().copied().enumerate().collect(), offset: -d })
            .collect(),
        start: x0,
    };
    PlantedQp { program, q, c, ineq, eq, active: (0..n_active).collect() }
}

/// Solves the KKT system of the active rows and equalities directly:
/// [Q Gᵀ; G 0][x; y] = [−c; h]. Returns (x, multipliers of the active rows).
pub fn kkt_oracle(qp: &PlantedQp) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let n = qp.c.len();
    let rows: Vec<(&Vec<f64>, f64)> = qp
        .active
        .iter()
        .map(|&i| (&qp.ineq[i].0, qp.ineq[i].1))
        .chain(qp.eq.iter().map(|(e, d)| (e, *d)))
        .collect();
    let dim = n + rows.len();
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = qp.q[i][j];
        }
        rhs[i] = -qp.c[i];
    }
    for (r, (a, b)) in rows.iter().enumerate() {
        for j in 0..n {
            k[(n + r, j)] = a[j];
            k[(j, n + r)] = a[j];
        }
        rhs[n + r] = *b;
    }
    let sol = k.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    let x = sol.rows(0, n).iter().copied().collect();
    let lam = sol.rows(n, qp.active.len()).iter().copied().collect();
    (x, lam)
}

pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Largest relative violation of the original problem's constraints:
/// window limits, nonnegativity, totals, pipeline causality, endpoints,
/// kinematic limits and the UAV budget.
pub fn max_violation(s: &Scenario, z: &PlanVariables) -> f64 {
    let n = s.frames();
    let dt = s.frame_len();
    let u = &s.uav;
    let mut worst = 0.0f64;
    let mut bump = |v: f64| worst = worst.max(v);
    for (k, user) in s.users.iter().enumerate() {
        let i = user.input_bits.max(1.0);
        let o = user.output_bits();
        let (up, comp, down) = (&z.bits.uplink[k], &z.bits.compute[k], &z.bits.downlink[k]);
        for m in 0..n {
            for (row, lo, hi) in [(up, 0, n - 3), (comp, 1, n - 2), (down, 2, n - 1)] {
                bump(-row[m] / i);
                if m < lo || m > hi {
                    bump(row[m].abs() / i);
                }
            }
        }
        bump((up.iter().sum::<f64>() - user.input_bits).abs() / i);
        bump((comp.iter().sum::<f64>() - user.input_bits).abs() / i);
        bump((down.iter().sum::<f64>() - o).abs() / i);
        let (mut cu, mut cc, mut cd) = (0.0, 0.0, 0.0);
        for m in 0..n {
            // Bits computed by frame m arrived before it; bits sent by frame
            // m were computed before it.
            cc += comp[m];
            cd += down[m];
            bump((cc - cu) / i);
            bump((cd - user.output_ratio * (cc - comp[m])) / i);
            cu += up[m];
        }
    }
    let p = &z.trajectory.positions;
    let span = u.v_max * dt;
    for (a, b) in [(p[0], u.start), (p[n], u.end)] {
        bump((a[0] - b[0]).hypot(a[1] - b[1]) / span);
    }
    match s.flight {
        FlightModel::Model1 => {
            for m in 0..n {
                bump(((p[m + 1][0] - p[m][0]).hypot(p[m + 1][1] - p[m][1]) / dt - u.v_max) / u.v_max);
            }
        }
        FlightModel::Model2 => {
            let v = &z.trajectory.velocities;
            let a = &z.trajectory.accelerations;
            let vc = u.boundary_velocity();
            for b in [v[0], v[n]] {
                bump((b[0] - vc[0]).hypot(b[1] - vc[1]) / u.v_max);
            }
            for m in 0..=n {
                bump((v[m][0].hypot(v[m][1]) - u.v_max) / u.v_max);
            }
            for m in 0..n {
                bump((a[m][0].hypot(a[m][1]) - u.a_max) / u.a_max);
                for ax in 0..2 {
                    let pos = p[m][ax] + v[m][ax] * dt + 0.5 * a[m][ax] * dt * dt;
                    bump((p[m + 1][ax] - pos).abs() / span);
                    bump((v[m + 1][ax] - v[m][ax] - a[m][ax] * dt).abs() / u.v_max);
                }
            }
        }
    }
    match uav_cloudlet::energy::uav_energy_total(s, &z.bits, &z.trajectory) {
        Ok(l) => bump(-l.budget_slack / u.energy_budget),
        Err(_) => bump(f64::INFINITY),
    }
    worst
}

/// Largest turn between consecutive frame velocities, radians. Frames
/// slower than `min_speed` have no heading and are skipped.
pub fn max_heading_change(s: &Scenario, z: &PlanVariables, min_speed: f64) -> f64 {
    let dt = s.frame_len();
    let headings: Vec<f64> = (0..s.frames())
        .map(|m| z.trajectory.frame_velocity(m, dt))
        .filter(|v| v[0].hypot(v[1]) >= min_speed)
        .map(|v| v[1].atan2(v[0]))
        .collect();
    headings
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]).rem_euclid(std::f64::consts::TAU);
            d.min(std::f64::consts::TAU - d)
        })
        .fold(0.0, f64::max)
}

/// Closest horizontal approach of the trajectory waypoints to user k, m.
pub fn closest_approach(s: &Scenario, z: &PlanVariables, k: usize) -> f64 {
    let m = s.users[k].position;
    z.trajectory.positions.iter().map(|p| (p[0] - m[0]).hypot(p[1] - m[1])).fold(f64::INFINITY, f64::min)
}

/// One user, five frames, straight-line trajectory.
pub fn grid_scenario() -> Scenario {
    TableTwo::scenario(
        &[[6.0, 4.0]],
        &[4e6],
        0.225,
        5,
        -5.0,
        [0.0, 0.0],
        [5.0, 0.0],
        2.22,
        Access::Orthogonal,
        FlightModel::Model1,
    )
    .unwrap()
}

/// Minimum mobile energy over uplink allocations on a grid of step I/steps
/// along the straight line. Compute and downlink bits do not enter the
/// objective, and copying the uplink schedule one and two frames later
/// (scaled to the output size) is always pipeline-feasible, so every grid
/// point of the uplink is feasible and the search runs over it alone.
pub fn grid_search(s: &Scenario, steps: usize) -> (f64, [f64; 3]) {
    let user = &s.users[0];
    let line = uav_cloudlet::plan::Trajectory::straight_line(s);
    let bu = bit_unit(s);
    let n0b = s.radio.noise_psd * s.radio.bandwidth;
    let dt = s.frame_len();
    let cost = |m: usize, l: f64| {
        let p = line.positions[m];
        let d2 = s.uav.altitude.powi(2) + (p[0] - user.position[0]).powi(2) + (p[1] - user.position[1]).powi(2);
        n0b * dt * d2 / s.radio.ref_gain * ((l / bu).exp2() - 1.0)
    };
    let step = user.input_bits / steps as f64;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let l = [i as f64 * step, j as f64 * step, (steps - i - j) as f64 * step];
            let e = cost(0, l[0]) + cost(1, l[1]) + cost(2, l[2]);
            if e < best.0 {
                best = (e, l);
            }
        }
    }
    best
}
