//! Smooth convex programs assembled from small local functions of affine
//! expressions in the decision vector.
//!
//! ```text
//! minimize   Σ_t w_t f_t(A_t x + b_t) + cᵀx
//! subject to Σ_t w_t g_t(A_t x + b_t) + aᵀx + a0 ≤ 0   (each inequality)
//!            eᵀx = e0                                  (each equality)
//! ```

use std::sync::Arc;

use super::banded::SymBand;

/// A smooth function of a few scalars with analytic derivatives.
pub trait LocalFn: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    /// Returns f(y). When requested, writes ∇f into `grad` (length `dim`)
    /// and ∇²f row-major into `hess` (length `dim²`). Points outside the
    /// function's domain return a non-finite value.
    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64;
}

/// Σ coefᵢ x[idxᵢ] + offset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub offset: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { terms: Vec::new(), offset: c }
    }

    pub fn var(i: usize) -> Self {
        Affine { terms: vec![(i, 1.0)], offset: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.offset, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn scaled(&self, s: f64) -> Affine {
        Affine {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            offset: self.offset * s,
        }
    }

    /// self + s·other, merging duplicate indices.
    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        for &(i, c) in &other.terms {
            match self.terms.iter_mut().find(|t| t.0 == i) {
                Some(t) => t.1 += s * c,
                None => self.terms.push((i, s * c)),
            }
        }
        self.offset += s * other.offset;
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

/// w · f(inputs(x)).
#[derive(Debug, Clone)]
pub struct Term {
    pub inputs: Vec<Affine>,
    pub f: Arc<dyn LocalFn>,
    pub weight: f64,
}

impl Term {
    pub fn new(inputs: Vec<Affine>, f: Arc<dyn LocalFn>, weight: f64) -> Self {
        debug_assert_eq!(inputs.len(), f.dim());
        Term { inputs, f, weight }
    }

    fn local_point(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        y.extend(self.inputs.iter().map(|a| a.eval(x)));
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut y = Vec::with_capacity(self.inputs.len());
        self.local_point(x, &mut y);
        self.weight * self.f.eval(&y, None, None)
    }

    fn support(&self, out: &mut Vec<usize>) {
        for a in &self.inputs {
            out.extend(a.terms.iter().map(|t| t.0));
        }
    }
}

/// Σ terms + linear ≤ 0.
#[derive(Debug, Clone, Default)]
pub struct Inequality {
    pub terms: Vec<Term>,
    pub linear: Affine,
    pub label: String,
}

impl Inequality {
    pub fn linear(linear: Affine, label: impl Into<String>) -> Self {
        Inequality { terms: Vec::new(), linear, label: label.into() }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum::<f64>() + self.linear.eval(x)
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s = Vec::new();
        for t in &self.terms {
            t.support(&mut s);
        }
        s.extend(self.linear.terms.iter().map(|t| t.0));
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub num_vars: usize,
    pub objective: Vec<Term>,
    pub objective_linear: Affine,
    pub inequalities: Vec<Inequality>,
    /// Each expression is constrained to equal zero.
    pub equalities: Vec<Affine>,
    /// Starting point; should satisfy the inequalities.
    pub start: Vec<f64>,
}

impl Program {
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|t| t.value(x)).sum::<f64>() + self.objective_linear.eval(x)
    }

    /// Largest inequality value and largest equality violation at x.
    pub fn infeasibility(&self, x: &[f64]) -> (f64, f64) {
        let ineq = self.inequalities.iter().map(|g| g.value(x)).fold(f64::NEG_INFINITY, f64::max);
        let eq = self.equalities.iter().map(|e| e.eval(x).abs()).fold(0.0, f64::max);
        (ineq, eq)
    }
}

/// Scratch space for evaluating terms.
#[derive(Default)]
pub(crate) struct Scratch {
    y: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
}

/// Evaluates a term, accumulating weight·scale·∇ into `grad` (dense over
/// all variables) and weight·scale·∇² into the lower band of `hess`.
pub(crate) fn eval_term(
    t: &Term,
    x: &[f64],
    scale: f64,
    grad: Option<&mut [f64]>,
    hess: Option<&mut SymBand>,
    sc: &mut Scratch,
) -> f64 {
    let d = t.inputs.len();
    t.local_point(x, &mut sc.y);
    sc.g.clear();
    sc.g.resize(d, 0.0);
    let want_h = hess.is_some();
    if want_h {
        sc.h.clear();
        sc.h.resize(d * d, 0.0);
    }
    let v = t.f.eval(
        &sc.y,
        if grad.is_some() { Some(&mut sc.g) } else { None },
        if want_h { Some(&mut sc.h) } else { None },
    );
    let w = t.weight * scale;
    if let Some(grad) = grad {
        for (a, gi) in t.inputs.iter().zip(&sc.g) {
            for &(idx, c) in &a.terms {
                grad[idx] += w * c * gi;
            }
        }
    }
    if let Some(hess) = hess {
        for (i, ai) in t.inputs.iter().enumerate() {
            for (j, aj) in t.inputs.iter().enumerate() {
                let hij = sc.h[i * d + j];
                if hij == 0.0 {
                    continue;
                }
                for &(p, cp) in &ai.terms {
                    for &(q, cq) in &aj.terms {
                        if p >= q {
                            hess.add(p, q, w * cp * cq * hij);
                        }
                    }
                }
            }
        }
    }
    t.weight * v
}

/// Dense gradient of a term only over its own support, as (index, value)
/// pairs accumulated into `out`.
pub(crate) fn term_sparse_grad(t: &Term, x: &[f64], out: &mut Vec<(usize, f64)>, sc: &mut Scratch) -> f64 {
    let d = t.inputs.len();
    t.local_point(x, &mut sc.y);
    sc.g.clear();
    sc.g.resize(d, 0.0);
    let v = t.f.eval(&sc.y, Some(&mut sc.g), None);
    for (a, gi) in t.inputs.iter().zip(&sc.g) {
        for &(idx, c) in &a.terms {
            out.push((idx, t.weight * c * gi));
        }
    }
    t.weight * v
}

/// ½ yᵀQy + cᵀy over a dense input vector.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: Vec<f64>,
    pub c: Vec<f64>,
}

impl LocalFn for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let n = self.c.len();
        let mut qy = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                qy[i] += self.q[i * n + j] * y[j];
            }
        }
        let v = (0..n).map(|i| 0.5 * y[i] * qy[i] + self.c[i] * y[i]).sum();
        if let Some(g) = grad {
            for i in 0..n {
                g[i] = qy[i] + self.c[i];
            }
        }
        if let Some(h) = hess {
            h.copy_from_slice(&self.q);
        }
        v
    }
}

/// ½ Σ yᵢ².
#[derive(Debug, Clone, Copy)]
pub struct HalfSquares(pub usize);

impl LocalFn for HalfSquares {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, y: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad {
            g.copy_from_slice(y);
        }
        if let Some(h) = hess {
            for i in 0..self.0 {
                h[i * self.0 + i] = 1.0;
            }
        }
        0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }
}
