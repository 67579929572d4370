//! Small dense complex matrices (fiber dimension m is 1..4 in practice).
//!
//! These are the per-node values of connection components, gauges and
//! potentials. Everything is row-major `Vec<Complex64>` with the rank
//! carried alongside; no attempt is made at expression templates.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense m x m complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub m: usize,
    pub a: Vec<C64>,
}

impl CMat {
    pub fn zeros(m: usize) -> Self {
        CMat {
            m,
            a: vec![C64::new(0.0, 0.0); m * m],
        }
    }

    pub fn eye(m: usize) -> Self {
        let mut out = Self::zeros(m);
        for i in 0..m {
            out.a[i * m + i] = C64::new(1.0, 0.0);
        }
        out
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let m = rows.len();
        let mut a = Vec::with_capacity(m * m);
        for r in rows {
            assert_eq!(r.len(), m, "CMat::from_rows needs a square matrix");
            a.extend_from_slice(r);
        }
        CMat { m, a }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.a[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.a[i * self.m + j] = v;
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            m: self.m,
            a: self.a.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, o: &CMat) -> CMat {
        CMat {
            m: self.m,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, o: &CMat) -> CMat {
        CMat {
            m: self.m,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn mul(&self, o: &CMat) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(m);
        for i in 0..m {
            for k in 0..m {
                let aik = self.a[i * m + k];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..m {
                    out.a[i * m + j] += aik * o.a[k * m + j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adj(&self) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.a[j * m + i] = self.a[i * m + j].conj();
            }
        }
        out
    }

    pub fn commutator(&self, o: &CMat) -> CMat {
        self.mul(o).sub(&o.mul(self))
    }

    pub fn trace(&self) -> C64 {
        (0..self.m).map(|i| self.a[i * self.m + i]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Skew-Hermitian projection (X - X^dagger)/2.
    pub fn skew_part(&self) -> CMat {
        self.sub(&self.adj()).scale(C64::new(0.5, 0.0))
    }

    /// Hermitian projection (X + X^dagger)/2.
    pub fn herm_part(&self) -> CMat {
        self.add(&self.adj()).scale(C64::new(0.5, 0.0))
    }

    pub fn is_skew_hermitian(&self, tol: f64) -> bool {
        self.add(&self.adj()).norm() <= tol * self.norm() + 1e-14
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adj()).norm() <= tol * self.norm() + 1e-14
    }

    /// Distance of F^dagger F from the identity.
    pub fn unitary_defect(&self) -> f64 {
        self.adj().mul(self).sub(&CMat::eye(self.m)).norm()
    }

    pub fn det(&self) -> C64 {
        // LU with partial pivoting on a copy.
        let m = self.m;
        let mut a = self.a.clone();
        let mut det = C64::new(1.0, 0.0);
        for k in 0..m {
            let mut p = k;
            let mut best = a[k * m + k].norm();
            for r in (k + 1)..m {
                let v = a[r * m + k].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return C64::new(0.0, 0.0);
            }
            if p != k {
                for j in 0..m {
                    a.swap(k * m + j, p * m + j);
                }
                det = -det;
            }
            let piv = a[k * m + k];
            det *= piv;
            for r in (k + 1)..m {
                let f = a[r * m + k] / piv;
                for j in k..m {
                    let v = a[k * m + j];
                    a[r * m + j] -= f * v;
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan with partial pivoting. Returns None when singular.
    pub fn inverse(&self) -> Option<CMat> {
        let m = self.m;
        let mut a = self.a.clone();
        let mut b = CMat::eye(m).a;
        for k in 0..m {
            let mut p = k;
            let mut best = a[k * m + k].norm();
            for r in (k + 1)..m {
                let v = a[r * m + k].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..m {
                    a.swap(k * m + j, p * m + j);
                    b.swap(k * m + j, p * m + j);
                }
            }
            let piv = a[k * m + k];
            for j in 0..m {
                a[k * m + j] /= piv;
                b[k * m + j] /= piv;
            }
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = a[r * m + k];
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..m {
                    let av = a[k * m + j];
                    let bv = b[k * m + j];
                    a[r * m + j] -= f * av;
                    b[r * m + j] -= f * bv;
                }
            }
        }
        Some(CMat { m, a: b })
    }

    /// Matrix exponential by scaling and squaring with a Taylor kernel.
    pub fn expm(&self) -> CMat {
        let m = self.m;
        let nrm = self.norm();
        let mut s = 0u32;
        while nrm / (1u64 << s) as f64 > 0.25 {
            s += 1;
        }
        let x = self.scale(C64::new(1.0 / (1u64 << s) as f64, 0.0));
        let mut term = CMat::eye(m);
        let mut sum = CMat::eye(m);
        for k in 1..20 {
            term = term.mul(&x).scale(C64::new(1.0 / k as f64, 0.0));
            sum = sum.add(&term);
            if term.norm() < 1e-18 {
                break;
            }
        }
        let mut out = sum;
        for _ in 0..s {
            out = out.mul(&out);
        }
        out
    }

    /// Principal logarithm of a unitary matrix (skew-Hermitian result),
    /// by inverse scaling-squaring: repeated Denman-Beavers square roots
    /// until close to the identity, then a Mercator series.
    pub fn logm_unitary(&self) -> CMat {
        let m = self.m;
        let eye = CMat::eye(m);
        let mut p = self.clone();
        let mut k = 0u32;
        while p.sub(&eye).norm() > 0.3 && k < 40 {
            // Denman-Beavers iteration for the principal square root.
            let mut y = p.clone();
            let mut z = eye.clone();
            for _ in 0..30 {
                let yi = y.inverse().expect("unitary matrices are invertible");
                let zi = z.inverse().expect("unitary matrices are invertible");
                let yn = y.add(&zi).scale(C64::new(0.5, 0.0));
                let zn = z.add(&yi).scale(C64::new(0.5, 0.0));
                let delta = yn.sub(&y).norm();
                y = yn;
                z = zn;
                if delta < 1e-15 {
                    break;
                }
            }
            p = y;
            k += 1;
        }
        let x = p.sub(&eye);
        let mut term = eye.clone();
        let mut log = CMat::zeros(m);
        for j in 1..40 {
            term = term.mul(&x);
            let coef = if j % 2 == 1 { 1.0 } else { -1.0 } / j as f64;
            log = log.add(&term.scale(C64::new(coef, 0.0)));
            if term.norm() < 1e-17 {
                break;
            }
        }
        log = log.scale(C64::new((1u64 << k) as f64, 0.0));
        // The log of a unitary matrix is skew-Hermitian; project off roundoff.
        log.skew_part()
    }

    /// Singular values in decreasing order, via one-sided Jacobi on A^dagger A.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = self.m;
        let mut h = self.adj().mul(self);
        // Jacobi diagonalization of the Hermitian PSD matrix h.
        for _sweep in 0..60 {
            let mut off = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        off += h.at(i, j).norm_sqr();
                    }
                }
            }
            if off.sqrt() < 1e-15 * (1.0 + h.norm()) {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    let hpq = h.at(p, q);
                    if hpq.norm() < 1e-300 {
                        continue;
                    }
                    let hpp = h.at(p, p).re;
                    let hqq = h.at(q, q).re;
                    // Complex Jacobi rotation annihilating h[p][q].
                    let phase = hpq / hpq.norm();
                    let tau = (hqq - hpp) / (2.0 * hpq.norm());
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    // Apply rotation R on rows/cols p, q: R = [[c, s*e], [-s*conj(e), c]].
                    for j in 0..m {
                        let hpj = h.at(p, j);
                        let hqj = h.at(q, j);
                        h.set(p, j, hpj * c - hqj * s * phase.conj());
                        h.set(q, j, hpj * s * phase + hqj * c);
                    }
                    for i in 0..m {
                        let hip = h.at(i, p);
                        let hiq = h.at(i, q);
                        h.set(i, p, hip * c - hiq * s * phase);
                        h.set(i, q, hip * s * phase.conj() + hiq * c);
                    }
                }
            }
        }
        let mut sv: Vec<f64> = (0..m).map(|i| h.at(i, i).re.max(0.0).sqrt()).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_roundtrip() {
        let a = CMat::from_rows(&[
            &[c(1.0, 0.5), c(2.0, -1.0)],
            &[c(0.0, 1.0), c(3.0, 0.0)],
        ]);
        let inv = a.inverse().expect("invertible");
        let prod = a.mul(&inv);
        assert!(prod.sub(&CMat::eye(2)).norm() < 1e-13, "A * A^-1 != I");
    }

    #[test]
    fn det_of_triangular() {
        let a = CMat::from_rows(&[&[c(2.0, 0.0), c(5.0, 1.0)], &[c(0.0, 0.0), c(3.0, 0.0)]]);
        let d = a.det();
        assert!((d - c(6.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_of_skew_is_unitary() {
        let x = CMat::from_rows(&[
            &[c(0.0, 0.3), c(0.2, 0.1)],
            &[c(-0.2, 0.1), c(0.0, -0.4)],
        ]);
        assert!(x.is_skew_hermitian(1e-12));
        let u = x.expm();
        assert!(u.unitary_defect() < 1e-13, "exp(skew) should be unitary");
    }

    #[test]
    fn singular_values_of_diagonal() {
        let a = CMat::from_rows(&[&[c(3.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, -0.5)]]);
        let sv = a.singular_values();
        assert!((sv[0] - 3.0).abs() < 1e-12 && (sv[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn expm_scalar_matches_closed_form() {
        let x = CMat::from_rows(&[&[c(0.0, 1.2)]]);
        let u = x.expm();
        assert!((u.at(0, 0) - C64::from_polar(1.0, 1.2)).norm() < 1e-14);
    }
}
