//! Convex local models of the non-convex energy terms, anchored at an iterate.
//!
//! Every model is a [`LocalFn`] over normalized inputs: bits in units of
//! B·Δ, positions in units of H, speeds in units of v_max, accelerations in
//! units of a_max, α in units of N0·B·Δ and β in units of
//! e0 = N0·B·Δ·H²/g0. Energies come out in units of e0 (the uplink slack
//! model comes out in units of N0·B·Δ). [`Surrogate`] hides the scaling and
//! evaluates in physical units.
//!
//! Objective-type models follow the product rule
//! f1(x)f2(y) ≈ f1(x)f2(y_v) + f1(x_v)f2(y) + proximal terms, which matches
//! the gradient at the anchor. Constraint-type models write a product of
//! nonnegative convex functions as ½(h1+h2)² − ½h1² − ½h2² and linearize the
//! subtracted squares, which gives a tight convex upper bound.

use std::f64::consts::LN_2;
use std::sync::Arc;

use crate::plan::{PlanVariables, Units, Var};
use crate::scenario::Scenario;
use crate::solver::LocalFn;

/// Smallest admissible speed slack, m/s.
pub const TAU_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Gradient-consistent with the original at the anchor.
    Objective,
    /// Upper bound, tight at the anchor.
    Constraint,
}

/// A convex model of one energy term in physical units.
#[derive(Debug, Clone)]
pub struct Surrogate {
    kind: SurrogateKind,
    inputs: Vec<Var>,
    scales: Vec<f64>,
    unit: f64,
    f: Arc<dyn LocalFn>,
}

impl Surrogate {
    pub fn kind(&self) -> SurrogateKind {
        self.kind
    }

    pub fn inputs(&self) -> &[Var] {
        &self.inputs
    }

    /// Physical size of one normalized unit of each input.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Physical value of one normalized output unit.
    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn local_fn(&self) -> Arc<dyn LocalFn> {
        self.f.clone()
    }

    fn local_point(&self, z: &PlanVariables) -> Vec<f64> {
        self.inputs.iter().zip(&self.scales).map(|(&v, s)| z.get(v) / s).collect()
    }

    pub fn value(&self, z: &PlanVariables) -> f64 {
        self.unit * self.f.eval(&self.local_point(z), None, None)
    }

    /// Gradient with respect to [`Surrogate::inputs`], physical units.
    pub fn gradient(&self, z: &PlanVariables) -> Vec<f64> {
        let mut g = vec![0.0; self.inputs.len()];
        self.f.eval(&self.local_point(z), Some(&mut g), None);
        g.iter().zip(&self.scales).map(|(g, s)| self.unit * g / s).collect()
    }
}

/// Convex building blocks h(y) ≥ 0 over a local input vector.
#[derive(Debug, Clone)]
enum Inner {
    Var(usize),
    /// 2^{rate·y_i} − 1.
    Pow2m1 { idx: usize, rate: f64 },
    /// (y_i − m_x)² + (y_{i+1} − m_y)² + 1.
    Dist { idx: usize, m: [f64; 2] },
    /// Σ y_j over the listed inputs.
    Sum(Vec<usize>),
    /// (Σ w_j y_j)².
    WeightedSquare(Vec<(usize, f64)>),
}

struct Val {
    h: f64,
    g: Vec<f64>,
    hess: Vec<f64>,
}

impl Inner {
    fn eval(&self, y: &[f64], want_h: bool) -> Val {
        let d = y.len();
        let mut g = vec![0.0; d];
        let mut hess = if want_h { vec![0.0; d * d] } else { Vec::new() };
        let h = match self {
            Inner::Var(i) => {
                g[*i] = 1.0;
                y[*i]
            }
            Inner::Pow2m1 { idx, rate } => {
                let r = rate * LN_2;
                let e = (r * y[*idx]).exp();
                g[*idx] = r * e;
                if want_h {
                    hess[idx * d + idx] = r * r * e;
                }
                (r * y[*idx]).exp_m1()
            }
            Inner::Dist { idx, m } => {
                let (dx, dy) = (y[*idx] - m[0], y[idx + 1] - m[1]);
                g[*idx] = 2.0 * dx;
                g[idx + 1] = 2.0 * dy;
                if want_h {
                    hess[idx * d + idx] = 2.0;
                    hess[(idx + 1) * d + idx + 1] = 2.0;
                }
                dx * dx + dy * dy + 1.0
            }
            Inner::Sum(ix) => {
                for &i in ix {
                    g[i] = 1.0;
                }
                ix.iter().map(|&i| y[i]).sum()
            }
            Inner::WeightedSquare(w) => {
                let s: f64 = w.iter().map(|&(i, c)| c * y[i]).sum();
                for &(i, c) in w {
                    g[i] = 2.0 * s * c;
                    if want_h {
                        for &(j, cj) in w {
                            hess[i * d + j] = 2.0 * c * cj;
                        }
                    }
                }
                s * s
            }
        };
        Val { h, g, hess }
    }
}

#[derive(Debug, Clone)]
struct DcPair {
    h1: Inner,
    h2: Inner,
    coef: f64,
    /// h1, ∇h1, h2, ∇h2 at the anchor.
    h1v: f64,
    g1v: Vec<f64>,
    h2v: f64,
    g2v: Vec<f64>,
}

/// Σ coef·[½(h1+h2)² − ½h1(y_v)² − ½h2(y_v)² − h1(y_v)∇h1(y_v)ᵀ(y−y_v)
/// − h2(y_v)∇h2(y_v)ᵀ(y−y_v)] + Σ coef·h(y).
#[derive(Debug, Clone)]
struct DcBound {
    anchor: Vec<f64>,
    pairs: Vec<DcPair>,
    extra: Vec<(Inner, f64)>,
}

impl DcBound {
    fn new(anchor: Vec<f64>, pairs: Vec<(Inner, Inner, f64)>, extra: Vec<(Inner, f64)>) -> Self {
        let pairs = pairs
            .into_iter()
            .map(|(h1, h2, coef)| {
                let a = h1.eval(&anchor, false);
                let b = h2.eval(&anchor, false);
                DcPair { h1, h2, coef, h1v: a.h, g1v: a.g, h2v: b.h, g2v: b.g }
            })
            .collect();
        DcBound { anchor, pairs, extra }
    }
}

impl LocalFn for DcBound {
    fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn eval(&self, y: &[f64], mut grad: Option<&mut [f64]>, mut hess: Option<&mut [f64]>) -> f64 {
        let d = y.len();
        let want_h = hess.is_some();
        let mut v = 0.0;
        for p in &self.pairs {
            let a = p.h1.eval(y, want_h);
            let b = p.h2.eval(y, want_h);
            // ½ max(s, 0)² keeps the composition convex where infeasible
            // trial points push h1 + h2 below zero; on the domain s ≥ 0.
            let s = (a.h + b.h).max(0.0);
            let on = if s > 0.0 { 1.0 } else { 0.0 };
            let mut lin = 0.0;
            for i in 0..d {
                lin += (p.h1v * p.g1v[i] + p.h2v * p.g2v[i]) * (y[i] - self.anchor[i]);
            }
            v += p.coef * (0.5 * s * s - 0.5 * p.h1v * p.h1v - 0.5 * p.h2v * p.h2v - lin);
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..d {
                    g[i] += p.coef * (s * (a.g[i] + b.g[i]) - p.h1v * p.g1v[i] - p.h2v * p.g2v[i]);
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for i in 0..d {
                    let gi = a.g[i] + b.g[i];
                    for j in 0..d {
                        let gj = a.g[j] + b.g[j];
                        h[i * d + j] += p.coef * (on * gi * gj + s * (a.hess[i * d + j] + b.hess[i * d + j]));
                    }
                }
            }
        }
        for (f, c) in &self.extra {
            let a = f.eval(y, want_h);
            v += c * a.h;
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..d {
                    g[i] += c * a.g[i];
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                for (hi, ai) in h.iter_mut().zip(&a.hess) {
                    *hi += c * ai;
                }
            }
        }
        v
    }
}

/// coef·[f1(y)f2(y_v) + f1(y_v)f2(y)] + Σ w/2 (y_i − y_v,i)².
#[derive(Debug, Clone)]
struct ProductModel {
    anchor: Vec<f64>,
    f1: Inner,
    f2: Inner,
    coef: f64,
    f1v: f64,
    f2v: f64,
    prox: f64,
}

impl ProductModel {
    fn new(anchor: Vec<f64>, f1: Inner, f2: Inner, coef: f64, prox: f64) -> Self {
        let f1v = f1.eval(&anchor, false).h;
        let f2v = f2.eval(&anchor, false).h;
        ProductModel { anchor, f1, f2, coef, f1v, f2v, prox }
    }
}

impl LocalFn for ProductModel {
    fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let d = y.len();
        let want_h = hess.is_some();
        let a = self.f1.eval(y, want_h);
        let b = self.f2.eval(y, want_h);
        let mut v = self.coef * (a.h * self.f2v + self.f1v * b.h);
        for i in 0..d {
            let e = y[i] - self.anchor[i];
            v += 0.5 * self.prox * e * e;
        }
        if let Some(g) = grad {
            for i in 0..d {
                g[i] = self.coef * (a.g[i] * self.f2v + self.f1v * b.g[i]) + self.prox * (y[i] - self.anchor[i]);
            }
        }
        if let Some(h) = hess {
            for i in 0..d * d {
                h[i] = self.coef * (a.hess[i] * self.f2v + self.f1v * b.hess[i]);
            }
            for i in 0..d {
                h[i * d + i] += self.prox;
            }
        }
        v
    }
}

/// c1‖v‖³ + c2/τ + c3‖a‖²/τ over (v_x, v_y, a_x, a_y, τ).
#[derive(Debug, Clone)]
pub struct PropulsionBound {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LocalFn for PropulsionBound {
    fn dim(&self) -> usize {
        5
    }

    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let (v, a, t) = ([y[0], y[1]], [y[2], y[3]], y[4]);
        if !(t > 0.0) {
            return f64::NAN;
        }
        let sv = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let aa = a[0] * a[0] + a[1] * a[1];
        let val = self.c1 * sv * sv * sv + self.c2 / t + self.c3 * aa / t;
        if let Some(g) = grad {
            for i in 0..2 {
                g[i] = 3.0 * self.c1 * sv * v[i];
                g[2 + i] = 2.0 * self.c3 * a[i] / t;
            }
            g[4] = -self.c2 / (t * t) - self.c3 * aa / (t * t);
        }
        if let Some(h) = hess {
            h.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    let vv = if sv > 0.0 { v[i] * v[j] / sv } else { 0.0 };
                    h[i * 5 + j] = 3.0 * self.c1 * (vv + if i == j { sv } else { 0.0 });
                }
                h[(2 + i) * 5 + 2 + i] = 2.0 * self.c3 / t;
                h[(2 + i) * 5 + 4] = -2.0 * self.c3 * a[i] / (t * t);
                h[4 * 5 + 2 + i] = h[(2 + i) * 5 + 4];
            }
            h[24] = 2.0 * self.c2 / (t * t * t) + 2.0 * self.c3 * aa / (t * t * t);
        }
        val
    }
}

/// τ² − f_lb(v) over (τ, v_x, v_y), with f_lb linearized at `anchor`.
#[derive(Debug, Clone)]
pub struct SpeedSlackBound {
    pub anchor: [f64; 2],
}

impl LocalFn for SpeedSlackBound {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let w = self.anchor;
        if let Some(g) = grad {
            g[0] = 2.0 * y[0];
            g[1] = -2.0 * w[0];
            g[2] = -2.0 * w[1];
        }
        if let Some(h) = hess {
            h.iter_mut().for_each(|x| *x = 0.0);
            h[0] = 2.0;
        }
        y[0] * y[0] - f_lb(w, [y[1], y[2]])
    }
}

/// Linear lower bound ‖w‖² + 2wᵀ(v − w) on ‖v‖², tight at v = w.
pub fn f_lb(w: [f64; 2], v: [f64; 2]) -> f64 {
    w[0] * w[0] + w[1] * w[1] + 2.0 * (w[0] * (v[0] - w[0]) + w[1] * (v[1] - w[1]))
}

fn pos_vars(n: usize) -> [Var; 2] {
    [Var::Pos { n, axis: 0 }, Var::Pos { n, axis: 1 }]
}

fn user_offset(s: &Scenario, k: usize) -> [f64; 2] {
    let h = s.uav.altitude;
    let m = s.users[k].xy();
    [m[0] / h, m[1] / h]
}

fn build(kind: SurrogateKind, inputs: Vec<Var>, u: &Units, unit: f64, f: Arc<dyn LocalFn>) -> Surrogate {
    let scales = inputs.iter().map(|&v| u.scale(v)).collect();
    Surrogate { kind, inputs, scales, unit, f }
}

fn anchor_point(z: &PlanVariables, inputs: &[Var], u: &Units) -> Vec<f64> {
    inputs.iter().map(|&v| z.get(v) / u.scale(v)).collect()
}

/// Mean cycles per bit, the normalization of the cloudlet load.
pub fn cycle_scale(s: &Scenario) -> f64 {
    s.users.iter().map(|u| u.cycles_per_bit).sum::<f64>() / s.num_users() as f64
}

/// Coefficient of C̃_k·b_k·(Σ C̃ b)² in the cloudlet energy, units of e0.
pub fn compute_coefficient(s: &Scenario) -> f64 {
    let u = Units::of(s);
    let dt = s.frame_len();
    let c = cycle_scale(s);
    s.uav.capacitance * c.powi(3) * u.bits.powi(3) / (dt * dt) / u.energy
}

/// Uplink OMA energy of user k in frame n, product model in (L, p).
pub fn sur_uplink_oma(s: &Scenario, z: &PlanVariables, k: usize, n: usize, prox: f64) -> Surrogate {
    let u = Units::of(s);
    let kk = s.num_users() as f64;
    let [px, py] = pos_vars(n);
    let inputs = vec![Var::Uplink { k, n }, px, py];
    let y = anchor_point(z, &inputs, &u);
    let f = ProductModel::new(
        y,
        Inner::Pow2m1 { idx: 0, rate: kk },
        Inner::Dist { idx: 1, m: user_offset(s, k) },
        1.0 / kk,
        prox,
    );
    build(SurrogateKind::Objective, inputs, &u, u.energy, Arc::new(f))
}

/// Cloudlet energy for user k in frame n, upper bound in the frame's compute bits.
pub fn sur_comp(s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> Surrogate {
    let u = Units::of(s);
    let c = cycle_scale(s);
    let inputs: Vec<Var> = (0..s.num_users()).map(|j| Var::Compute { k: j, n }).collect();
    let y = anchor_point(z, &inputs, &u);
    let w: Vec<(usize, f64)> = s.users.iter().enumerate().map(|(j, us)| (j, us.cycles_per_bit / c)).collect();
    let coef = compute_coefficient(s) * s.users[k].cycles_per_bit / c;
    let f = DcBound::new(y, vec![(Inner::Var(k), Inner::WeightedSquare(w), coef)], Vec::new());
    build(SurrogateKind::Constraint, inputs, &u, u.energy, Arc::new(f))
}

/// Downlink OMA energy of user k in frame n, upper bound in (L, p).
pub fn sur_downlink_oma(s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> Surrogate {
    let u = Units::of(s);
    let kk = s.num_users() as f64;
    let [px, py] = pos_vars(n);
    let inputs = vec![Var::Downlink { k, n }, px, py];
    let y = anchor_point(z, &inputs, &u);
    let f = DcBound::new(
        y,
        vec![(Inner::Pow2m1 { idx: 0, rate: kk }, Inner::Dist { idx: 1, m: user_offset(s, k) }, 1.0 / kk)],
        Vec::new(),
    );
    build(SurrogateKind::Constraint, inputs, &u, u.energy, Arc::new(f))
}

/// NOMA objective α_k/g_k(p), product model in (α, p).
pub fn sur_obj_noma(s: &Scenario, z: &PlanVariables, k: usize, n: usize, prox: f64) -> Surrogate {
    let u = Units::of(s);
    let [px, py] = pos_vars(n);
    let inputs = vec![Var::Alpha { k, n }, px, py];
    let y = anchor_point(z, &inputs, &u);
    let f = ProductModel::new(y, Inner::Var(0), Inner::Dist { idx: 1, m: user_offset(s, k) }, 1.0, prox);
    build(SurrogateKind::Objective, inputs, &u, u.energy, Arc::new(f))
}

fn others(s: &Scenario, k: usize) -> impl Iterator<Item = usize> {
    (0..s.num_users()).filter(move |&j| j != k)
}

/// Received-energy requirement (N0BΔ + Σ_{k'≠k} α_{k'})(2^{L/(BΔ)} − 1) of
/// NOMA uplink user k, upper bound in (L, α_{−k}).
pub fn sur_h_noma(s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> Surrogate {
    let u = Units::of(s);
    let mut inputs = vec![Var::Uplink { k, n }];
    inputs.extend(others(s, k).map(|j| Var::Alpha { k: j, n }));
    let y = anchor_point(z, &inputs, &u);
    let c = Inner::Pow2m1 { idx: 0, rate: 1.0 };
    let rest = Inner::Sum((1..inputs.len()).collect());
    let f = DcBound::new(y, vec![(c.clone(), rest, 1.0)], vec![(c, 1.0)]);
    build(SurrogateKind::Constraint, inputs, &u, u.noise, Arc::new(f))
}

/// NOMA downlink energy (N0BΔ/g_k(p) + Σ_{k'≠k} β_{k'})(2^{L/(BΔ)} − 1),
/// upper bound in (L, p, β_{−k}).
pub fn sur_downlink_noma(s: &Scenario, z: &PlanVariables, k: usize, n: usize) -> Surrogate {
    let u = Units::of(s);
    let [px, py] = pos_vars(n);
    let mut inputs = vec![Var::Downlink { k, n }, px, py];
    inputs.extend(others(s, k).map(|j| Var::Beta { k: j, n }));
    let y = anchor_point(z, &inputs, &u);
    let c = Inner::Pow2m1 { idx: 0, rate: 1.0 };
    let f = DcBound::new(
        y,
        vec![
            (c.clone(), Inner::Dist { idx: 1, m: user_offset(s, k) }, 1.0),
            (c, Inner::Sum((3..inputs.len()).collect()), 1.0),
        ],
        Vec::new(),
    );
    build(SurrogateKind::Constraint, inputs, &u, u.energy, Arc::new(f))
}

/// Model 2 propulsion energy of frame n with the speed replaced by its
/// slack τ, convex in (v, a, τ) and exact when τ = ‖v‖.
pub fn sur_fly_model2(s: &Scenario, n: usize) -> Surrogate {
    let u = Units::of(s);
    let uav = &s.uav;
    let inputs = vec![
        Var::Vel { n, axis: 0 },
        Var::Vel { n, axis: 1 },
        Var::Acc { n, axis: 0 },
        Var::Acc { n, axis: 1 },
        Var::SpeedSlack { n },
    ];
    let f = PropulsionBound {
        c1: uav.kappa1 * u.speed.powi(3) / u.energy,
        c2: uav.kappa2 / (u.speed * u.energy),
        c3: uav.kappa2 * u.accel * u.accel / (u.speed * uav.gravity * uav.gravity * u.energy),
    };
    build(SurrogateKind::Constraint, inputs, &u, u.energy, Arc::new(f))
}

/// τ_n² − f_lb(v_n) in units of v_max², linearized at the anchor velocity.
pub fn speed_slack_bound(s: &Scenario, z: &PlanVariables, n: usize) -> Surrogate {
    let u = Units::of(s);
    let v = z.trajectory.velocities[n];
    let inputs = vec![Var::SpeedSlack { n }, Var::Vel { n, axis: 0 }, Var::Vel { n, axis: 1 }];
    let f = SpeedSlackBound { anchor: [v[0] / u.speed, v[1] / u.speed] };
    build(SurrogateKind::Constraint, inputs, &u, u.speed * u.speed, Arc::new(f))
}
