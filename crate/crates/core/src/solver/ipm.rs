//! Primal-dual interior-point method for [`Program`]s.
//!
//! Inequalities get slacks (g(x) + s = 0, s ≥ 0); each iteration solves the
//! condensed Newton system
//!
//! ```text
//! [ W + Jᵀ(Λ/S)J   Aᵀ ] [Δx]   [ -r_d - Jᵀ((Λ r_p - r_c)/S) ]
//! [ A              0  ] [Δν] = [ -r_e                        ]
//! ```
//!
//! with a banded LDLᵀ factorization in an interleaved variable/multiplier
//! ordering. Inequalities touching many variables are kept out of the band
//! and added back through a Woodbury update.

use super::banded::{Ldl, SymBand};
use super::program::{eval_term, term_sparse_grad, Program, Scratch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Bound on primal, dual and complementarity residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Static regularization added to the primal diagonal and subtracted
    /// from the dual diagonal.
    pub reg: f64,
    /// When progress stalls or the Newton system breaks down, the best
    /// iterate is still returned if its residuals are below this level.
    pub acceptable_tol: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { tol: 1e-7, max_iter: 100, reg: 1e-10, acceptable_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x: Vec<f64>,
    /// Inequality multipliers.
    pub lambda: Vec<f64>,
    /// Equality multipliers.
    pub nu: Vec<f64>,
    /// max(‖equality residual‖∞, max inequality violation).
    pub primal_residual: f64,
    /// ‖∇f + Jᵀλ + Aᵀν‖∞.
    pub dual_residual: f64,
    /// max λᵢ|gᵢ(x)|.
    pub complementarity: f64,
    pub objective: f64,
    pub iterations: usize,
}

impl KktSolution {
    pub fn max_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolveError {
    #[error("interior-point method hit the iteration limit (residual {:.3e})", .0.max_residual())]
    MaxIterations(Box<KktSolution>),
    #[error("Newton system could not be factorized: {0}")]
    NumericalBreakdown(String),
    #[error("start point violates `{label}` by {violation:.3e}")]
    InfeasibleStart { label: String, violation: f64 },
}

/// Supports above this size are treated as dense rows.
const DENSE_SUPPORT: usize = 48;

struct Layout {
    /// KKT position of each variable.
    var_pos: Vec<usize>,
    /// KKT position of each equality multiplier.
    eq_pos: Vec<usize>,
    sign: Vec<f64>,
    bandwidth: usize,
    dense: Vec<bool>,
    /// Sparse equality rows as (var, coef).
    eq_rows: Vec<Vec<(usize, f64)>>,
}

impl Layout {
    fn new(p: &Program) -> Self {
        let n = p.num_vars;
        let eq_rows: Vec<Vec<(usize, f64)>> = p
            .equalities
            .iter()
            .map(|e| {
                let mut r: Vec<(usize, f64)> = Vec::new();
                for &(i, c) in &e.terms {
                    match r.iter_mut().find(|t| t.0 == i) {
                        Some(t) => t.1 += c,
                        None => r.push((i, c)),
                    }
                }
                r
            })
            .collect();
        // Each equality row goes right after the last variable it touches.
        let mut after: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (r, row) in eq_rows.iter().enumerate() {
            let last = row.iter().map(|t| t.0 + 1).max().unwrap_or(0);
            after[last].push(r);
        }
        let mut var_pos = vec![0; n];
        let mut eq_pos = vec![0; eq_rows.len()];
        let mut sign = Vec::with_capacity(n + eq_rows.len());
        let mut next = 0;
        for r in &after[0] {
            eq_pos[*r] = next;
            sign.push(-1.0);
            next += 1;
        }
        for i in 0..n {
            var_pos[i] = next;
            sign.push(1.0);
            next += 1;
            for r in &after[i + 1] {
                eq_pos[*r] = next;
                sign.push(-1.0);
                next += 1;
            }
        }

        let span = |idx: &mut dyn Iterator<Item = usize>| -> usize {
            let (mut lo, mut hi) = (usize::MAX, 0);
            for i in idx {
                lo = lo.min(i);
                hi = hi.max(i);
            }
            if lo == usize::MAX {
                0
            } else {
                hi - lo
            }
        };
        let mut bw = 0;
        let mut support = Vec::new();
        let term_span = |t: &super::program::Term, bw: &mut usize| {
            let mut it = t.inputs.iter().flat_map(|a| a.terms.iter().map(|x| var_pos[x.0]));
            *bw = (*bw).max(span(&mut it));
        };
        for t in &p.objective {
            term_span(t, &mut bw);
        }
        let mut dense = Vec::with_capacity(p.inequalities.len());
        for g in &p.inequalities {
            support.clear();
            support.extend(g.support());
            let is_dense = support.len() > DENSE_SUPPORT;
            dense.push(is_dense);
            for t in &g.terms {
                term_span(t, &mut bw);
            }
            if !is_dense {
                bw = bw.max(span(&mut support.iter().map(|&i| var_pos[i])));
            }
        }
        for (r, row) in eq_rows.iter().enumerate() {
            for &(i, _) in row {
                bw = bw.max(eq_pos[r].abs_diff(var_pos[i]));
            }
        }
        Layout { var_pos, eq_pos, sign, bandwidth: bw, dense, eq_rows }
    }
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    g: Vec<f64>,
    /// Merged sparse gradient of each inequality.
    jac: Vec<Vec<(usize, f64)>>,
    eq: Vec<f64>,
}

fn merge(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    v.sort_unstable_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for (i, c) in v {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += c,
            _ => out.push((i, c)),
        }
    }
    out
}

fn evaluate(p: &Program, x: &[f64], sc: &mut Scratch) -> Option<Eval> {
    let n = p.num_vars;
    let mut grad = vec![0.0; n];
    let mut f = p.objective_linear.eval(x);
    for &(i, c) in &p.objective_linear.terms {
        grad[i] += c;
    }
    for t in &p.objective {
        f += eval_term(t, x, 1.0, Some(&mut grad), None, sc);
    }
    if !f.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut g = Vec::with_capacity(p.inequalities.len());
    let mut jac = Vec::with_capacity(p.inequalities.len());
    for c in &p.inequalities {
        let mut pairs: Vec<(usize, f64)> = c.linear.terms.clone();
        let mut v = c.linear.eval(x);
        for t in &c.terms {
            v += term_sparse_grad(t, x, &mut pairs, sc);
        }
        if !v.is_finite() || pairs.iter().any(|t| !t.1.is_finite()) {
            return None;
        }
        g.push(v);
        jac.push(merge(pairs));
    }
    let eq = p.equalities.iter().map(|e| e.eval(x)).collect();
    Some(Eval { f, grad, g, jac, eq })
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
    re: Vec<f64>,
}

fn residuals(e: &Eval, s: &[f64], lambda: &[f64], nu: &[f64], lay: &Layout) -> Residuals {
    let mut rd = e.grad.clone();
    for (row, &l) in e.jac.iter().zip(lambda) {
        for &(i, c) in row {
            rd[i] += l * c;
        }
    }
    for (row, &v) in lay.eq_rows.iter().zip(nu) {
        for &(i, c) in row {
            rd[i] += v * c;
        }
    }
    let rp = e.g.iter().zip(s).map(|(g, s)| g + s).collect();
    Residuals { rd, rp, re: e.eq.clone() }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn merit(r: &Residuals, s: &[f64], lambda: &[f64], target: f64) -> f64 {
    let mut m = 0.0;
    for v in r.rd.iter().chain(&r.rp).chain(&r.re) {
        m += v * v;
    }
    for (s, l) in s.iter().zip(lambda) {
        let c = s * l - target;
        m += c * c;
    }
    m.sqrt()
}

/// Newton matrix: band part plus dense rank-one corrections.
struct Kkt {
    fact: Ldl,
    band: SymBand,
    reg: f64,
    /// (weight, gradient) of dense inequality rows, and K0⁻¹u for each.
    lowrank: Vec<(f64, Vec<(usize, f64)>)>,
    z: Vec<Vec<f64>>,
    /// Cholesky-free small system (D⁻¹ + UᵀK0⁻¹U), solved by Gaussian elimination.
    cap: Vec<f64>,
}

impl Kkt {
    fn apply_band_only(&self, lay: &Layout, v: &[f64], out: &mut [f64]) {
        // Matrix without the static regularization.
        self.band.mul_vec(v, out);
        for (i, sg) in lay.sign.iter().enumerate() {
            out[i] -= sg * self.reg * v[i];
        }
    }

    fn apply(&self, lay: &Layout, v: &[f64], out: &mut [f64]) {
        self.apply_band_only(lay, v, out);
        for (w, u) in &self.lowrank {
            let dot: f64 = u.iter().map(|&(i, c)| c * v[lay.var_pos[i]]).sum();
            for &(i, c) in u {
                out[lay.var_pos[i]] += w * c * dot;
            }
        }
    }

    fn solve_regularized(&self, lay: &Layout, b: &mut [f64]) {
        self.fact.solve(b);
        let r = self.lowrank.len();
        if r == 0 {
            return;
        }
        // x = K0⁻¹b − Z (D⁻¹ + UᵀZ)⁻¹ Uᵀ K0⁻¹ b
        let mut t: Vec<f64> = self
            .lowrank
            .iter()
            .map(|(_, u)| u.iter().map(|&(i, c)| c * b[lay.var_pos[i]]).sum())
            .collect();
        solve_small(&self.cap, r, &mut t);
        for (zj, tj) in self.z.iter().zip(&t) {
            for (bi, zi) in b.iter_mut().zip(zj) {
                *bi -= zi * tj;
            }
        }
    }

    fn solve(&self, lay: &Layout, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_regularized(lay, &mut x);
        let mut ax = vec![0.0; x.len()];
        for _ in 0..3 {
            self.apply(lay, &x, &mut ax);
            let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let scale = norm_inf(rhs).max(1e-300);
            if norm_inf(&r) <= 1e-14 * scale {
                break;
            }
            self.solve_regularized(lay, &mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        x
    }
}

fn solve_small(a: &[f64], r: usize, b: &mut [f64]) {
    let mut m = a.to_vec();
    for c in 0..r {
        let piv = (c..r)
            .max_by(|&i, &j| m[i * r + c].abs().total_cmp(&m[j * r + c].abs()))
            .unwrap();
        if piv != c {
            for k in 0..r {
                m.swap(c * r + k, piv * r + k);
            }
            b.swap(c, piv);
        }
        let d = m[c * r + c];
        for i in c + 1..r {
            let f = m[i * r + c] / d;
            if f != 0.0 {
                for k in c..r {
                    m[i * r + k] -= f * m[c * r + k];
                }
                b[i] -= f * b[c];
            }
        }
    }
    for c in (0..r).rev() {
        let mut v = b[c];
        for k in c + 1..r {
            v -= m[c * r + k] * b[k];
        }
        b[c] = v / m[c * r + c];
    }
}

struct Solver<'a> {
    p: &'a Program,
    lay: Layout,
    opts: IpmOptions,
    sc: Scratch,
}

impl<'a> Solver<'a> {
    fn factor(&mut self, x: &[f64], s: &[f64], lambda: &[f64], e: &Eval) -> Result<Kkt, SolveError> {
        let lay = &self.lay;
        let dim = lay.sign.len();
        let mut band = SymBand::zeros(dim, lay.bandwidth);
        // The band stores positions, the terms use variable indices, so
        // assemble in variable space first when the two coincide; otherwise map.
        let mut hv = SymBand::zeros(self.p.num_vars, self.var_bandwidth());
        for t in &self.p.objective {
            eval_term(t, x, 1.0, None, Some(&mut hv), &mut self.sc);
        }
        for (c, &l) in self.p.inequalities.iter().zip(lambda) {
            if l == 0.0 {
                continue;
            }
            for t in &c.terms {
                eval_term(t, x, l, None, Some(&mut hv), &mut self.sc);
            }
        }
        let nv = self.p.num_vars;
        let vb = hv.bandwidth();
        for i in 0..nv {
            for j in i.saturating_sub(vb)..=i {
                let v = hv.get(i, j);
                if v != 0.0 {
                    band.add(lay.var_pos[i], lay.var_pos[j], v);
                }
            }
        }
        let mut lowrank = Vec::new();
        for (k, row) in e.jac.iter().enumerate() {
            let d = lambda[k] / s[k];
            if lay.dense[k] {
                lowrank.push((d, row.clone()));
                continue;
            }
            for (a, &(i, ci)) in row.iter().enumerate() {
                for &(j, cj) in &row[..=a] {
                    band.add(lay.var_pos[i], lay.var_pos[j], d * ci * cj);
                }
            }
        }
        for (r, row) in lay.eq_rows.iter().enumerate() {
            for &(i, c) in row {
                band.add(lay.eq_pos[r], lay.var_pos[i], c);
            }
        }
        let mut reg = self.opts.reg;
        let fact = loop {
            let mut b = band.clone();
            for (i, sg) in lay.sign.iter().enumerate() {
                b.add(i, i, sg * reg);
            }
            match b.ldl(&lay.sign, 1e-300) {
                Ok(f) => {
                    band = b;
                    break f;
                }
                Err(_) if reg < 1e-2 => reg *= 100.0,
                Err(i) => {
                    return Err(SolveError::NumericalBreakdown(format!(
                        "pivot {i} of {dim} has the wrong sign even with regularization {reg:.1e}"
                    )))
                }
            }
        };
        let mut kkt = Kkt { fact, band, reg, lowrank, z: Vec::new(), cap: Vec::new() };
        let r = kkt.lowrank.len();
        if r > 0 {
            let mut z = Vec::with_capacity(r);
            for (_, u) in &kkt.lowrank {
                let mut v = vec![0.0; dim];
                for &(i, c) in u {
                    v[lay.var_pos[i]] = c;
                }
                kkt.fact.solve(&mut v);
                z.push(v);
            }
            let mut cap = vec![0.0; r * r];
            for a in 0..r {
                for b in 0..r {
                    let ua = &kkt.lowrank[a].1;
                    cap[a * r + b] = ua.iter().map(|&(i, c)| c * z[b][lay.var_pos[i]]).sum();
                }
                cap[a * r + a] += 1.0 / kkt.lowrank[a].0;
            }
            kkt.z = z;
            kkt.cap = cap;
        }
        Ok(kkt)
    }

    fn var_bandwidth(&self) -> usize {
        let mut bw = 0;
        let mut span = |idx: &mut dyn Iterator<Item = usize>| {
            let (mut lo, mut hi) = (usize::MAX, 0);
            for i in idx {
                lo = lo.min(i);
                hi = hi.max(i);
            }
            if lo != usize::MAX {
                bw = bw.max(hi - lo);
            }
        };
        for t in self.p.objective.iter().chain(self.p.inequalities.iter().flat_map(|c| c.terms.iter())) {
            span(&mut t.inputs.iter().flat_map(|a| a.terms.iter().map(|x| x.0)));
        }
        bw
    }

    /// Direction (Δx, Δs, Δλ, Δν) for a given complementarity target vector.
    fn direction(
        &self,
        kkt: &Kkt,
        e: &Eval,
        r: &Residuals,
        s: &[f64],
        lambda: &[f64],
        rc: &[f64],
    ) -> Direction {
        let lay = &self.lay;
        let dim = lay.sign.len();
        let mut rhs = vec![0.0; dim];
        for i in 0..self.p.num_vars {
            rhs[lay.var_pos[i]] = -r.rd[i];
        }
        for (k, row) in e.jac.iter().enumerate() {
            let w = (lambda[k] * r.rp[k] - rc[k]) / s[k];
            for &(i, c) in row {
                rhs[lay.var_pos[i]] -= c * w;
            }
        }
        for (q, &pos) in lay.eq_pos.iter().enumerate() {
            rhs[pos] = -r.re[q];
        }
        let sol = kkt.solve(lay, &rhs);
        let dx: Vec<f64> = lay.var_pos.iter().map(|&p| sol[p]).collect();
        let dnu: Vec<f64> = lay.eq_pos.iter().map(|&p| sol[p]).collect();
        let mut ds = Vec::with_capacity(s.len());
        let mut dl = Vec::with_capacity(s.len());
        for (k, row) in e.jac.iter().enumerate() {
            let jdx: f64 = row.iter().map(|&(i, c)| c * dx[i]).sum();
            let dsk = -r.rp[k] - jdx;
            ds.push(dsk);
            dl.push((-rc[k] - lambda[k] * dsk) / s[k]);
        }
        (dx, ds, dl, dnu)
    }
}

fn max_step(v: &[f64], dv: &[f64], frac: f64) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-frac * x / d);
        }
    }
    a
}

fn report(p: &Program, x: Vec<f64>, lambda: Vec<f64>, nu: Vec<f64>, e: &Eval, r: &Residuals, it: usize) -> KktSolution {
    let viol = e.g.iter().fold(0.0f64, |a, &g| a.max(g));
    let comp = e.g.iter().zip(&lambda).fold(0.0f64, |a, (g, l)| a.max(l * g.abs()));
    let _ = p;
    KktSolution {
        primal_residual: norm_inf(&r.re).max(viol),
        dual_residual: norm_inf(&r.rd),
        complementarity: comp,
        objective: e.f,
        iterations: it,
        x,
        lambda,
        nu,
    }
}

/// Solves a convex program from its start point.
pub fn solve(p: &Program, opts: &IpmOptions) -> Result<KktSolution, SolveError> {
    let m = p.inequalities.len();
    let mut solver = Solver { p, lay: Layout::new(p), opts: *opts, sc: Scratch::default() };
    let mut x = p.start.clone();
    let mut e = evaluate(p, &x, &mut solver.sc).ok_or_else(|| SolveError::InfeasibleStart {
        label: "domain".into(),
        violation: f64::INFINITY,
    })?;
    for (c, g) in p.inequalities.iter().zip(&e.g) {
        if *g > 0.0 && *g > 1e3 * opts.tol {
            return Err(SolveError::InfeasibleStart { label: c.label.clone(), violation: *g });
        }
    }
    let mut s: Vec<f64> = e.g.iter().map(|g| (-g).max(1e-2)).collect();
    let mut lambda: Vec<f64> = vec![1.0; s.len()];
    let mut nu = vec![0.0; p.equalities.len()];
    let mut best: Option<(f64, KktSolution)> = None;
    let mut best_it = 0;
    let mut short = false;

    for it in 0..opts.max_iter {
        let r = residuals(&e, &s, &lambda, &nu, &solver.lay);
        let sol = report(p, x.clone(), lambda.clone(), nu.clone(), &e, &r, it);
        let score = sol.max_residual().max(norm_inf(&r.rp));
        if score <= opts.tol {
            return Ok(sol);
        }
        if best.as_ref().is_none_or(|b| score < 0.5 * b.0) {
            best_it = it;
        }
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, sol));
        }
        if it >= best_it + 5 {
            if let Some(sol) = acceptable(best.clone(), opts) {
                return Ok(sol);
            }
        }
        let mu = if m > 0 { s.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>() / m as f64 } else { 0.0 };
        let kkt = match solver.factor(&x, &s, &lambda, &e) {
            Ok(k) => k,
            Err(err) => return acceptable(best, opts).ok_or(err),
        };

        // Predictor.
        let rc_aff: Vec<f64> = s.iter().zip(&lambda).map(|(a, b)| a * b).collect();
        let (_, ds_a, dl_a, _) = solver.direction(&kkt, &e, &r, &s, &lambda, &rc_aff);
        let ap = max_step(&s, &ds_a, 1.0);
        let ad = max_step(&lambda, &dl_a, 1.0);
        let mu_aff = if m > 0 {
            s.iter()
                .zip(&ds_a)
                .zip(lambda.iter().zip(&dl_a))
                .map(|((s, ds), (l, dl))| (s + ap * ds) * (l + ad * dl))
                .sum::<f64>()
                / m as f64
        } else {
            0.0
        };
        let mut sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        // After a short step the iterate is hugging curved constraint
        // boundaries; recenter instead of pushing complementarity down.
        if short {
            sigma = sigma.max(0.5);
        }
        // Corrector with second-order term.
        let target = sigma * mu;
        let rc: Vec<f64> = (0..m).map(|k| s[k] * lambda[k] - target + ds_a[k] * dl_a[k]).collect();
        let mut dir = solver.direction(&kkt, &e, &r, &s, &lambda, &rc);

        let mut accepted = false;
        let phi0 = merit(&r, &s, &lambda, target);
        for attempt in 0..2 {
            let amax = max_step(&s, &dir.1, 0.995).min(max_step(&lambda, &dir.2, 0.995));
            let mut alpha = amax;
            for i in 0..40 {
                let Some(t) = trial(&mut solver, &x, &s, &lambda, &nu, &dir, alpha, target) else {
                    alpha *= 0.5;
                    continue;
                };
                if t.phi <= (1.0 - 1e-4 * alpha) * phi0 || (attempt == 1 && alpha < 1e-12) {
                    if attempt == 0 && alpha < 1e-2 * amax {
                        break;
                    }
                    short = alpha < 0.1 * amax;
                    (x, s, lambda, nu, e) = (t.x, t.s, t.lambda, t.nu, t.e);
                    accepted = true;
                    break;
                }
                if i == 0 {
                    // Second-order correction: re-solve with the curvature the
                    // linearization missed at the trial point.
                    let mut rs = Residuals { rd: r.rd.clone(), rp: r.rp.clone(), re: r.re.clone() };
                    for (k, row) in e.jac.iter().enumerate() {
                        let jdx: f64 = row.iter().map(|&(i, c)| c * dir.0[i]).sum();
                        rs.rp[k] += (t.e.g[k] - e.g[k]) / alpha - jdx;
                    }
                    let rc = if attempt == 0 {
                        (0..m).map(|k| s[k] * lambda[k] - target + dir.1[k] * dir.2[k]).collect::<Vec<_>>()
                    } else {
                        (0..m).map(|k| s[k] * lambda[k] - mu).collect()
                    };
                    let soc = solver.direction(&kkt, &e, &rs, &s, &lambda, &rc);
                    let a = max_step(&s, &soc.1, 0.995).min(max_step(&lambda, &soc.2, 0.995));
                    if let Some(t) = trial(&mut solver, &x, &s, &lambda, &nu, &soc, a, target) {
                        if a >= 0.1 * amax && t.phi <= (1.0 - 1e-4 * a) * phi0 {
                            short = false;
                            (x, s, lambda, nu, e) = (t.x, t.s, t.lambda, t.nu, t.e);
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
            // Fall back to a plain centered Newton step.
            let rc: Vec<f64> = (0..m).map(|k| s[k] * lambda[k] - mu).collect();
            dir = solver.direction(&kkt, &e, &r, &s, &lambda, &rc);
        }
        if !accepted {
            break;
        }
    }
    let r = residuals(&e, &s, &lambda, &nu, &solver.lay);
    let last = report(p, x, lambda, nu, &e, &r, opts.max_iter);
    let score = last.max_residual().max(norm_inf(&r.rp));
    let best = match best {
        Some(b) if b.0 < score => b,
        _ => (score, last),
    };
    if let Some(sol) = acceptable(Some(best.clone()), opts) {
        return Ok(sol);
    }
    Err(SolveError::MaxIterations(Box::new(best.1)))
}

struct Trial {
    x: Vec<f64>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    nu: Vec<f64>,
    e: Eval,
    phi: f64,
}

type Direction = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn trial(
    solver: &mut Solver,
    x: &[f64],
    s: &[f64],
    lambda: &[f64],
    nu: &[f64],
    dir: &Direction,
    alpha: f64,
    target: f64,
) -> Option<Trial> {
    let (dx, ds, dl, dnu) = dir;
    let xt: Vec<f64> = x.iter().zip(dx).map(|(a, d)| a + alpha * d).collect();
    let e = evaluate(solver.p, &xt, &mut solver.sc)?;
    // Slack reset: a strictly satisfied constraint moves toward its exact
    // slack, by at most a factor 100 downward so centrality survives.
    let st: Vec<f64> = s
        .iter()
        .zip(ds)
        .zip(&e.g)
        .map(|((a, d), g)| {
            let t = a + alpha * d;
            if *g < 0.0 {
                (-g).max(1e-2 * t)
            } else {
                t
            }
        })
        .collect();
    let lt: Vec<f64> = lambda.iter().zip(dl).map(|(a, d)| a + alpha * d).collect();
    let nt: Vec<f64> = nu.iter().zip(dnu).map(|(a, d)| a + alpha * d).collect();
    let r = residuals(&e, &st, &lt, &nt, &solver.lay);
    let phi = merit(&r, &st, &lt, target);
    Some(Trial { x: xt, s: st, lambda: lt, nu: nt, e, phi })
}

fn acceptable(best: Option<(f64, KktSolution)>, opts: &IpmOptions) -> Option<KktSolution> {
    best.filter(|(score, _)| *score <= opts.acceptable_tol).map(|b| b.1)
}
