//! Symmetric banded matrices and their LDLᵀ factorization without pivoting.
//!
//! Used for quasi-definite KKT systems, where a symmetric ordering with a
//! positive primal block and a negative dual block is always factorizable.

/// Lower band of a symmetric n×n matrix with half-bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        SymBand { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        r * (self.bw + 1) + (c + self.bw - r)
    }

    /// Adds `v` to entries (i, j) and (j, i).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * w..(i + 1) * w];
            for j in lo..i {
                let a = row[j + self.bw - i];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += row[self.bw] * x[i];
        }
    }

    /// Factorizes A = L D Lᵀ. `sign[i]` is the expected pivot sign; a pivot
    /// with the wrong sign or magnitude below `tiny` aborts and reports its
    /// index.
    pub fn ldl(&self, sign: &[f64], tiny: f64) -> Result<Ldl, usize> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let mut ld = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            // Row i of L times D, computed left to right.
            for j in lo..i {
                let mut v = l[i * w + j + bw - i];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    v -= ld[k - lo] * l[j * w + k + bw - j];
                }
                ld[j - lo] = v;
                l[i * w + j + bw - i] = v / d[j];
            }
            let mut di = l[i * w + bw];
            for j in lo..i {
                di -= ld[j - lo] * l[i * w + j + bw - i];
            }
            if !(di * sign[i] > tiny) {
                return Err(i);
            }
            d[i] = di;
            l[i * w + bw] = 1.0;
        }
        Ok(Ldl { n, bw, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    /// Solves A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut v = b[i];
            for j in lo..i {
                v -= self.l[i * w + j + bw - i] * b[j];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let bi = b[i];
            for j in lo..i {
                b[j] -= self.l[i * w + j + bw - i] * bi;
            }
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quasi_definite(n: usize, m: usize, bw: usize, rng: &mut ChaCha8Rng) -> (SymBand, Vec<f64>) {
        let dim = n + m;
        let mut a = SymBand::zeros(dim, bw);
        let mut sign = vec![1.0; dim];
        for i in 0..dim {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for (i, s) in sign.iter_mut().enumerate() {
            // Interleave dual rows so the ordering is not block-separable.
            if i % 3 == 2 && m > 0 {
                *s = -1.0;
            }
            a.add(i, i, *s * (2.0 * bw as f64 + 1.0));
        }
        (a, sign)
    }

    #[test]
    fn solves_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(dim, bw) in &[(1, 0), (5, 1), (30, 4), (40, 39), (25, 7)] {
            let (a, sign) = random_quasi_definite(dim, dim / 3, bw, &mut rng);
            let n = a.dim();
            let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fact = a.ldl(&sign, 1e-300).unwrap();
            let mut x = b.clone();
            fact.solve(&mut x);
            let r = &dense * DVector::from_vec(x) - DVector::from_vec(b);
            assert!(r.amax() < 1e-10, "dim {dim} bw {bw}: {}", r.amax());
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, _) = random_quasi_definite(12, 4, 3, &mut rng);
        let n = a.dim();
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let mut y = vec![0.0; n];
        a.mul_vec(&x, &mut y);
        let want = &dense * DVector::from_vec(x);
        for i in 0..n {
            assert!((y[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_sign_pivot_is_reported() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert_eq!(a.ldl(&[1.0, 1.0], 1e-12).unwrap_err(), 1);
        assert!(a.ldl(&[1.0, -1.0], 1e-12).is_ok());
    }
}
