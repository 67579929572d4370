//! Complex banded LU factorization with partial pivoting.
//!
//! LAPACK-style band storage: a matrix with kl subdiagonals and ku
//! superdiagonals is held column-wise in a (2*kl + ku + 1) x n array so the
//! extra kl rows absorb pivoting fill-in. Entry (i, j) lives at band row
//! kl + ku + i - j of column j.

use crate::cmat::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    /// Column-major band storage, rows = 2*kl + ku + 1.
    pub ab: Vec<C64>,
    rows: usize,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let rows = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ab: vec![C64::new(0.0, 0.0); rows * n],
            rows,
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // Upper band is widened by kl for pivoting fill-in.
        debug_assert!(i + self.kl + self.ku >= j && j + self.kl >= i, "outside band");
        j * self.rows + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i + self.ku + self.kl < j || j + self.kl < i {
            return C64::new(0.0, 0.0);
        }
        self.ab[self.slot(i, j)]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    /// y = A x using only the original band (call before factorization).
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                let v = self.ab[self.slot(i, j)];
                if v != C64::new(0.0, 0.0) {
                    y[i] += v * x[j];
                }
            }
        }
        y
    }
}

/// LU factors of a band matrix, with pivot row indices.
#[derive(Debug, Clone)]
pub struct BandedLu {
    mat: BandMatrix,
    piv: Vec<usize>,
}

impl BandMatrix {
    /// Factors in place (consuming self) with partial pivoting.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku_eff = self.kl + self.ku; // fill-in widened upper band
        let mut piv = vec![0usize; n];
        for k in 0..n {
            // Pivot search in column k among rows k..=min(k+kl, n-1).
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.slot(k, k)].norm();
            for i in (k + 1)..=imax {
                let v = self.ab[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(Error::SingularSystem { row: k });
            }
            if p != k {
                // Swap rows k and p across columns k..=min(k+ku_eff, n-1).
                let jmax = (k + ku_eff).min(n - 1);
                for j in k..=jmax {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.ab.swap(a, b);
                }
            }
            let pivval = self.ab[self.slot(k, k)];
            for i in (k + 1)..=imax {
                let s = self.slot(i, k);
                let l = self.ab[s] / pivval;
                self.ab[s] = l;
                if l != C64::new(0.0, 0.0) {
                    let jmax = (k + ku_eff).min(n - 1);
                    for j in (k + 1)..=jmax {
                        let a = self.slot(k, j);
                        let b = self.slot(i, j);
                        let akj = self.ab[a];
                        self.ab[b] -= l * akj;
                    }
                }
            }
        }
        Ok(BandedLu { mat: self, piv })
    }
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.mat.n
    }

    /// Solves A x = b. The right-hand side is consumed and returned.
    pub fn solve(&self, mut b: Vec<C64>) -> Vec<C64> {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku_eff = self.mat.kl + self.mat.ku;
        // Forward: apply pivots and L.
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let imax = (k + kl).min(n - 1);
            let bk = b[k];
            if bk != C64::new(0.0, 0.0) {
                for i in (k + 1)..=imax {
                    let l = self.mat.ab[self.mat.slot(i, k)];
                    if l != C64::new(0.0, 0.0) {
                        b[i] -= l * bk;
                    }
                }
            }
        }
        // Back substitution with U.
        for k in (0..n).rev() {
            let jmax = (k + ku_eff).min(n - 1);
            let mut acc = b[k];
            for j in (k + 1)..=jmax {
                let u = self.mat.ab[self.mat.slot(k, j)];
                if u != C64::new(0.0, 0.0) {
                    acc -= u * b[j];
                }
            }
            b[k] = acc / self.mat.ab[self.mat.slot(k, k)];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn tridiagonal_solve_matches_direct() {
        // -u'' = f discretization: tridiag(-1, 2, -1).
        let n = 50;
        let mut m = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, c(2.0, 0.0));
            if i > 0 {
                m.set(i, i - 1, c(-1.0, 0.0));
            }
            if i + 1 < n {
                m.set(i, i + 1, c(-1.0, 0.0));
            }
        }
        let x_true: Vec<C64> = (0..n).map(|i| c((i as f64 * 0.1).sin(), 0.3)).collect();
        let b = m.matvec(&x_true);
        let lu = m.factor().unwrap();
        let x = lu.solve(b);
        let err: f64 = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-11, "tridiagonal solve error {err:.3e}");
    }

    #[test]
    fn random_band_solve_with_pivoting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let n = 40 + trial * 13;
            let kl = 4;
            let ku = 6;
            let mut m = BandMatrix::zeros(n, kl, ku);
            for j in 0..n {
                let lo = j.saturating_sub(ku);
                let hi = (j + kl).min(n - 1);
                for i in lo..=hi {
                    // Small diagonal on purpose so pivoting is exercised.
                    let v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    m.set(i, j, if i == j { v * 0.01 } else { v });
                }
            }
            let x_true: Vec<C64> = (0..n)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let b = m.matvec(&x_true);
            let lu = m.clone().factor().unwrap();
            let x = lu.solve(b);
            let err: f64 = x
                .iter()
                .zip(&x_true)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "trial {trial}: solve error {err:.3e}");
        }
    }

    #[test]
    fn singular_matrix_reports_row() {
        let mut m = BandMatrix::zeros(5, 1, 1);
        for i in 0..5 {
            if i != 2 {
                m.set(i, i, c(1.0, 0.0));
            }
        }
        match m.factor() {
            Err(Error::SingularSystem { row }) => assert_eq!(row, 2),
            other => panic!("expected singular error, got {other:?}"),
        }
    }
}
