//! Truncated multivariate jets with exact coefficients, and the boundary
//! jets of (inverse metric, tangential connection, potential) consumed by
//! the factorization.
//!
//! Index conventions: tangential coordinates are x'_1 .. x'_{n-1}; the
//! normal variable t = x^n increases into the manifold; a Series stores
//! Taylor coefficients around the base point, keyed by (normal power,
//! tangential exponent vector). The boundary jet carries the inverse metric
//! g^{alpha beta} (scalar entries), the tangential connection components
//! A_alpha (m x m, skew-Hermitian for unitary connections) and the
//! potential Q. The normal component A_n is structurally absent: jets are
//! always in the temporal (normal) gauge.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qc::{QC, RatMat};
use crate::error::{Error, Result};

/// Packed term key: byte 0 is the normal power, bytes 1..=tdim the
/// tangential exponents (tdim <= 7).
pub type SKey = u64;

#[inline]
pub fn skey_pack(nor: u8, tan: &[u8]) -> SKey {
    let mut k = nor as u64;
    for (i, &e) in tan.iter().enumerate() {
        k |= (e as u64) << (8 * (i + 1));
    }
    k
}

#[inline]
pub fn skey_nor(k: SKey) -> u8 {
    (k & 0xff) as u8
}

#[inline]
pub fn skey_tan(k: SKey, tdim: usize) -> Vec<u8> {
    (0..tdim).map(|i| ((k >> (8 * (i + 1))) & 0xff) as u8).collect()
}

#[inline]
pub fn skey_tan_deg(k: SKey, tdim: usize) -> usize {
    (0..tdim).map(|i| ((k >> (8 * (i + 1))) & 0xff) as usize).sum()
}

#[inline]
fn skey_tan_exp(k: SKey, i: usize) -> u8 {
    ((k >> (8 * (i + 1))) & 0xff) as u8
}

/// Truncated Taylor series in (x', t) with RatMat coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Series {
    pub m: usize,
    pub tdim: usize,
    pub terms: BTreeMap<SKey, RatMat>,
}

impl Series {
    pub fn zero(m: usize, tdim: usize) -> Self {
        Series {
            m,
            tdim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, tdim: usize, v: RatMat) -> Self {
        let mut s = Self::zero(m, tdim);
        if !v.is_zero() {
            s.terms.insert(0, v);
        }
        s
    }

    pub fn insert(&mut self, nor: u8, tan: Vec<u8>, v: RatMat) {
        if !v.is_zero() {
            self.terms.insert(skey_pack(nor, &tan), v);
        }
    }

    pub fn get(&self, nor: u8, tan: &[u8]) -> RatMat {
        self.terms
            .get(&skey_pack(nor, tan))
            .cloned()
            .unwrap_or_else(|| RatMat::zeros(self.m))
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &Series) -> Series {
        let mut out = self.clone();
        for (&k, v) in &o.terms {
            let cur = out.terms.remove(&k);
            let nv = match cur {
                Some(c) => c.add(v),
                None => v.clone(),
            };
            if !nv.is_zero() {
                out.terms.insert(k, nv);
            }
        }
        out
    }

    pub fn sub(&self, o: &Series) -> Series {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Series {
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self.terms.iter().map(|(&k, v)| (k, v.neg())).collect(),
        }
    }

    pub fn scale(&self, s: &QC) -> Series {
        if s.is_zero() {
            return Series::zero(self.m, self.tdim);
        }
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self.terms.iter().map(|(&k, v)| (k, v.scale(s))).collect(),
        }
    }

    /// Truncated product; scalar (m = 1) operands broadcast over matrices.
    pub fn mul(&self, o: &Series, tcap: usize, ncap: usize) -> Series {
        let m = self.m.max(o.m);
        let tdim = self.tdim;
        let mut out = Series::zero(m, tdim);
        for (&k1, v1) in &self.terms {
            let n1 = skey_nor(k1) as usize;
            if n1 > ncap {
                continue;
            }
            let d1 = skey_tan_deg(k1, tdim);
            for (&k2, v2) in &o.terms {
                let nn = n1 + skey_nor(k2) as usize;
                if nn > ncap {
                    continue;
                }
                if d1 + skey_tan_deg(k2, tdim) > tcap {
                    continue;
                }
                // Packed keys add componentwise when exponents stay small.
                let key = k1 + k2;
                let prod = mat_mul_broadcast(v1, v2, m);
                match out.terms.get_mut(&key) {
                    Some(c) => {
                        *c = c.add(&prod);
                    }
                    None => {
                        out.terms.insert(key, prod);
                    }
                }
            }
        }
        out.terms.retain(|_, v| !v.is_zero());
        out
    }

    /// Derivative with respect to tangential variable `i` (0-based).
    pub fn d_tan(&self, i: usize) -> Series {
        let mut out = Series::zero(self.m, self.tdim);
        for (&k, v) in &self.terms {
            let e = skey_tan_exp(k, i);
            if e == 0 {
                continue;
            }
            let key = k - (1u64 << (8 * (i + 1)));
            let coef = QC::from_int(e as i64);
            out.terms.insert(key, v.scale(&coef));
        }
        out
    }

    /// Derivative with respect to the normal variable.
    pub fn d_nor(&self) -> Series {
        let mut out = Series::zero(self.m, self.tdim);
        for (&k, v) in &self.terms {
            let n = skey_nor(k);
            if n == 0 {
                continue;
            }
            let coef = QC::from_int(n as i64);
            out.terms.insert(k - 1, v.scale(&coef));
        }
        out
    }

    /// Restriction to the boundary t = 0.
    pub fn restrict(&self) -> Series {
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self
                .terms
                .iter()
                .filter(|(&k, _)| skey_nor(k) == 0)
                .map(|(&k, v)| (k, v.clone()))
                .collect(),
        }
    }

    /// Normal-derivative slice of given order at t = 0, as a tangential series.
    pub fn normal_slice(&self, order: usize) -> Series {
        let fact = factorial(order);
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self
                .terms
                .iter()
                .filter(|(&k, _)| skey_nor(k) as usize == order)
                .map(|(&k, v)| (k - order as u64, v.scale(&fact)))
                .collect(),
        }
    }

    /// Adds `slice / order!` at normal power `order` (slice must be tangential).
    pub fn add_normal_slice(&mut self, order: usize, slice: &Series) {
        let inv_fact = factorial(order).inverse().unwrap();
        for (&k, v) in &slice.terms {
            assert_eq!(skey_nor(k), 0, "slice must be tangential");
            let key = k + order as u64;
            let nv = v.scale(&inv_fact);
            let cur = self.terms.remove(&key);
            let merged = match cur {
                Some(c) => c.add(&nv),
                None => nv,
            };
            if !merged.is_zero() {
                self.terms.insert(key, merged);
            }
        }
    }

    pub fn truncate(&self, tcap: usize, ncap: usize) -> Series {
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self
                .terms
                .iter()
                .filter(|(&k, _)| {
                    (skey_nor(k) as usize) <= ncap && skey_tan_deg(k, self.tdim) <= tcap
                })
                .map(|(&k, v)| (k, v.clone()))
                .collect(),
        }
    }

    pub fn is_zero_within(&self, tcap: usize, ncap: usize) -> bool {
        self.terms.iter().all(|(&k, v)| {
            (skey_nor(k) as usize) > ncap
                || skey_tan_deg(k, self.tdim) > tcap
                || v.is_zero()
        })
    }

    /// Value at the base point.
    pub fn value0(&self) -> RatMat {
        self.terms
            .get(&0)
            .cloned()
            .unwrap_or_else(|| RatMat::zeros(self.m))
    }

    /// Promotes a scalar series to c * Id_m.
    pub fn scalar_to_matrix(&self, m: usize) -> Series {
        assert_eq!(self.m, 1, "only scalar series promote");
        Series {
            m,
            tdim: self.tdim,
            terms: self
                .terms
                .iter()
                .map(|(&k, v)| (k, RatMat::scalar(m, v.at(0, 0).clone())))
                .collect(),
        }
    }

    /// Conjugate-transpose of every coefficient.
    pub fn adj(&self) -> Series {
        Series {
            m: self.m,
            tdim: self.tdim,
            terms: self.terms.iter().map(|(&k, v)| (k, v.adj())).collect(),
        }
    }
}

fn mat_mul_broadcast(a: &RatMat, b: &RatMat, m: usize) -> RatMat {
    match (a.m, b.m) {
        (1, 1) if m == 1 => RatMat {
            m: 1,
            a: vec![&a.a[0] * &b.a[0]],
        },
        (1, _) => b.scale(a.at(0, 0)),
        (_, 1) => a.scale(b.at(0, 0)),
        _ => a.mul(b),
    }
}

fn factorial(k: usize) -> QC {
    let mut f = BigRational::from_integer(BigInt::from(1));
    for i in 2..=k {
        f *= BigRational::from_integer(BigInt::from(i as i64));
    }
    QC {
        re: f,
        im: BigRational::zero(),
    }
}

/// Inverse of a square matrix of scalar series, by Neumann expansion around
/// the exact inverse of the constant term.
pub fn invert_series_matrix(
    entries: &[Series],
    dim: usize,
    tcap: usize,
    ncap: usize,
) -> Option<Vec<Series>> {
    assert_eq!(entries.len(), dim * dim);
    // Constant-term matrix.
    let mut c0 = RatMat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            c0.set(i, j, entries[i * dim + j].value0().at(0, 0).clone());
        }
    }
    let c0_inv = c0.inverse()?;
    let tdim = entries[0].tdim;
    // N = I - C0^-1 * M has no constant term; inverse = sum_k N^k * C0^-1.
    let mat_entry = |mat: &RatMat, i: usize, j: usize| -> Series {
        Series::constant(1, tdim, RatMat {
            m: 1,
            a: vec![mat.at(i, j).clone()],
        })
    };
    // n_mat[i][j] = delta - sum_k C0inv[i][k] * M[k][j]
    let mut n_mat = vec![Series::zero(1, tdim); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Series::zero(1, tdim);
            for k in 0..dim {
                let c = mat_entry(&c0_inv, i, k);
                acc = acc.add(&c.mul(&entries[k * dim + j], tcap, ncap));
            }
            let mut v = acc.neg();
            if i == j {
                v = v.add(&Series::constant(1, tdim, RatMat::eye(1)));
            }
            n_mat[i * dim + j] = v;
        }
    }
    // Accumulate sum_k N^k, k up to total truncation order.
    let mut sum = vec![Series::zero(1, tdim); dim * dim];
    for i in 0..dim {
        sum[i * dim + i] = Series::constant(1, tdim, RatMat::eye(1));
    }
    let mut power = sum.clone();
    for _ in 0..(tcap + ncap) {
        // power = power * N
        let mut next = vec![Series::zero(1, tdim); dim * dim];
        let mut all_zero = true;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Series::zero(1, tdim);
                for k in 0..dim {
                    acc = acc.add(&power[i * dim + k].mul(&n_mat[k * dim + j], tcap, ncap));
                }
                if !acc.is_empty() {
                    all_zero = false;
                }
                next[i * dim + j] = acc;
            }
        }
        if all_zero {
            break;
        }
        for i in 0..dim * dim {
            sum[i] = sum[i].add(&next[i]);
        }
        power = next;
    }
    // inverse = sum * C0^-1
    let mut out = vec![Series::zero(1, tdim); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Series::zero(1, tdim);
            for k in 0..dim {
                let c = mat_entry(&c0_inv, k, j);
                acc = acc.add(&sum[i * dim + k].mul(&c, tcap, ncap));
            }
            out[i * dim + j] = acc;
        }
    }
    Some(out)
}

/// Boundary jet of a normalized triple (g, A, Q) at a point p of the
/// boundary, in boundary normal coordinates with A_n = 0 (structurally).
#[derive(Debug, Clone)]
pub struct BoundaryJet {
    /// Manifold dimension; tangential dimension is n - 1.
    pub n: usize,
    /// Bundle rank.
    pub m: usize,
    /// Normal depth: orders 0..=k_depth are stored.
    pub k_depth: usize,
    /// Tangential depth.
    pub t_depth: usize,
    /// Inverse metric entries g^{alpha beta}, (n-1)^2 scalar series.
    pub g_inv: Vec<Series>,
    /// Tangential connection components A_alpha, m x m series.
    pub a: Vec<Series>,
    /// Potential Q, m x m series.
    pub q: Series,
    /// Mean-curvature normalization declared (and checked by cond_g_holds).
    pub cond_g: bool,
}

impl BoundaryJet {
    pub fn tdim(&self) -> usize {
        self.n - 1
    }

    pub fn flat(n: usize, m: usize, k_depth: usize, t_depth: usize) -> Self {
        let tdim = n - 1;
        let mut g_inv = vec![Series::zero(1, tdim); tdim * tdim];
        for i in 0..tdim {
            g_inv[i * tdim + i] = Series::constant(1, tdim, RatMat::eye(1));
        }
        BoundaryJet {
            n,
            m,
            k_depth,
            t_depth,
            g_inv,
            a: vec![Series::zero(m, tdim); tdim],
            q: Series::zero(m, tdim),
            cond_g: true,
        }
    }

    /// Lower-index metric as a series matrix (exact inverse of g_inv).
    pub fn g_lower(&self) -> Vec<Series> {
        invert_series_matrix(&self.g_inv, self.tdim(), self.t_depth, self.k_depth)
            .expect("metric block is invertible at the base point")
    }

    /// SPD check of the inverse metric at the base point (leading minors).
    pub fn spd_at_base(&self) -> bool {
        let d = self.tdim();
        let mut mat = RatMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                mat.set(i, j, self.g_inv[i * d + j].value0().at(0, 0).clone());
            }
        }
        // Leading principal minors positive (entries are real rationals).
        for k in 1..=d {
            let mut sub = RatMat::zeros(k);
            for i in 0..k {
                for j in 0..k {
                    sub.set(i, j, mat.at(i, j).clone());
                }
            }
            let det = det_rat(&sub);
            if !det.im.is_zero() || det.re <= BigRational::zero() {
                return false;
            }
        }
        true
    }

    /// Checks the normalization d^j/dt^j (g_ab dg^ab/dt) = 0 at t = 0 for
    /// 1 <= j <= k_depth - 1, exactly, within the tangential depth.
    pub fn cond_g_holds(&self) -> bool {
        let d = self.tdim();
        let lower = self.g_lower();
        // w(x', t) = sum_ab g_ab d_t g^ab, as a full series.
        let mut w = Series::zero(1, d);
        for a in 0..d {
            for b in 0..d {
                let dg = self.g_inv[a * d + b].d_nor();
                w = w.add(&lower[a * d + b].mul(&dg, self.t_depth, self.k_depth - 1));
            }
        }
        // All normal slices of order 1..k_depth-1 must vanish.
        for j in 1..self.k_depth.max(1) - 1 + 1 {
            if j > self.k_depth - 1 {
                break;
            }
            let slice = w.normal_slice(j);
            // Conservative tangential validity: t_depth - 1 from the product.
            if !slice.is_zero_within(self.t_depth.saturating_sub(1), 0) {
                return false;
            }
        }
        true
    }

    /// Random normalized jet: SPD inverse metric with the mean-curvature
    /// condition built in, skew-Hermitian A, Hermitian Q.
    pub fn random_normalized(
        n: usize,
        m: usize,
        k_depth: usize,
        t_depth: usize,
        seed: u64,
        normal_metric_variation: bool,
    ) -> Self {
        let tdim = n - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rat = |den: i64| -> QC {
            // Sparse small rationals keep the exact arithmetic fast.
            if rng.gen_range(0..5) != 0 {
                return QC::zero();
            }
            let num = rng.gen_range(-2i64..=2);
            QC::from_ratio(num, den)
        };
        // Tangential monomials within depth.
        let monos = tangential_monomials(tdim, t_depth);

        // Metric slices U_s (x'-series of the s-th normal derivative).
        let mut slices: Vec<Vec<Series>> = Vec::new();
        // Order 0: diagonally dominant symmetric.
        let mut u0 = vec![Series::zero(1, tdim); tdim * tdim];
        for i in 0..tdim {
            for j in i..tdim {
                let mut s = Series::zero(1, tdim);
                for mono in &monos {
                    let deg: usize = mono.iter().map(|&e| e as usize).sum();
                    let base = if deg == 0 {
                        if i == j {
                            &QC::one() + &rat(4)
                        } else {
                            rat(4)
                        }
                    } else {
                        rat(4)
                    };
                    if !base.is_zero() {
                        s.insert(0, mono.clone(), RatMat {
                            m: 1,
                            a: vec![base],
                        });
                    }
                }
                u0[i * tdim + j] = s.clone();
                u0[j * tdim + i] = s;
            }
        }
        slices.push(u0);
        // Higher orders.
        for ord in 1..=k_depth {
            let free = ord == 1;
            let mut cand = vec![Series::zero(1, tdim); tdim * tdim];
            if normal_metric_variation {
                for i in 0..tdim {
                    for j in i..tdim {
                        let mut s = Series::zero(1, tdim);
                        for mono in &monos {
                            let v = rat(4);
                            if !v.is_zero() {
                                s.insert(0, mono.clone(), RatMat { m: 1, a: vec![v] });
                            }
                        }
                        cand[i * tdim + j] = s.clone();
                        cand[j * tdim + i] = s;
                    }
                }
            }
            if !free && normal_metric_variation {
                // Trace correction so that d^{ord-1}/dt (g_ab dg^ab) = 0.
                let jet_partial = Self::from_slices(n, m, ord, t_depth, &slices, &cand);
                let lower = invert_series_matrix(&jet_partial, tdim, t_depth, ord)
                    .expect("partial metric invertible");
                // s_required = - sum_{r=1}^{j} C(j,r) (d^r g_low) . (d^{j+1-r} g^inv),
                // j = ord - 1; the r = 0 term is g_low . U_ord.
                let j = ord - 1;
                let mut s_req = Series::zero(1, tdim);
                for r in 1..=j {
                    let c = binom(j, r);
                    let mut contr = Series::zero(1, tdim);
                    for a in 0..tdim {
                        for b in 0..tdim {
                            let lr = slice_of(&lower[a * tdim + b], r);
                            let us = &slices[j + 1 - r][a * tdim + b];
                            contr = contr.add(&lr.mul(us, t_depth, 0));
                        }
                    }
                    s_req = s_req.sub(&contr.scale(&c));
                }
                // Current trace g_low . cand.
                let mut tr = Series::zero(1, tdim);
                for a in 0..tdim {
                    for b in 0..tdim {
                        let l0 = slice_of(&lower[a * tdim + b], 0);
                        tr = tr.add(&l0.mul(&cand[a * tdim + b], t_depth, 0));
                    }
                }
                // lambda = (s_req - tr) / (n - 1); cand += lambda * g^inv|_0.
                let lam = s_req.sub(&tr).scale(&QC::from_ratio(1, (tdim) as i64));
                for a in 0..tdim {
                    for b in 0..tdim {
                        let g0 = slices[0][a * tdim + b].clone();
                        cand[a * tdim + b] =
                            cand[a * tdim + b].add(&lam.mul(&g0, t_depth, 0));
                    }
                }
            }
            slices.push(cand);
        }
        // Assemble the full inverse-metric series.
        let mut g_inv = vec![Series::zero(1, tdim); tdim * tdim];
        for (ord, sl) in slices.iter().enumerate() {
            for e in 0..tdim * tdim {
                g_inv[e].add_normal_slice(ord, &sl[e]);
            }
        }

        // Connection and potential, full (x', t) jets.
        let mut a_fields = Vec::new();
        for _alpha in 0..tdim {
            let mut s = Series::zero(m, tdim);
            for nor in 0..=k_depth as u8 {
                for mono in &monos {
                    let mut mat = RatMat::zeros(m);
                    for i in 0..m {
                        mat.set(i, i, QC {
                            re: BigRational::zero(),
                            im: rat(4).re,
                        });
                        for j in i + 1..m {
                            let v = QC {
                                re: rat(4).re,
                                im: rat(4).re,
                            };
                            mat.set(i, j, v.clone());
                            mat.set(j, i, -&v.conj());
                        }
                    }
                    if !mat.is_zero() {
                        s.insert(nor, mono.clone(), mat);
                    }
                }
            }
            a_fields.push(s);
        }
        let mut q = Series::zero(m, tdim);
        for nor in 0..=k_depth as u8 {
            for mono in &monos {
                let mut mat = RatMat::zeros(m);
                for i in 0..m {
                    mat.set(i, i, QC {
                        re: rat(4).re,
                        im: BigRational::zero(),
                    });
                    for j in i + 1..m {
                        let v = QC {
                            re: rat(4).re,
                            im: rat(4).re,
                        };
                        mat.set(i, j, v.clone());
                        mat.set(j, i, v.conj());
                    }
                }
                if !mat.is_zero() {
                    q.insert(nor, mono.clone(), mat);
                }
            }
        }

        BoundaryJet {
            n,
            m,
            k_depth,
            t_depth,
            g_inv,
            a: a_fields,
            q,
            cond_g: true,
        }
    }

    fn from_slices(
        _n: usize,
        _m: usize,
        top: usize,
        t_depth: usize,
        slices: &[Vec<Series>],
        cand: &[Series],
    ) -> Vec<Series> {
        let tdim = slices[0].len().isqrt();
        let mut g = vec![Series::zero(1, tdim); tdim * tdim];
        for (ord, sl) in slices.iter().enumerate().take(top) {
            for e in 0..tdim * tdim {
                g[e].add_normal_slice(ord, &sl[e]);
            }
        }
        for e in 0..tdim * tdim {
            g[e].add_normal_slice(top, &cand[e]);
        }
        let _ = t_depth;
        g
    }
}

fn slice_of(s: &Series, order: usize) -> Series {
    s.normal_slice(order)
}

fn binom(n: usize, k: usize) -> QC {
    let mut v = BigRational::from_integer(BigInt::from(1));
    for i in 0..k {
        v *= BigRational::from_integer(BigInt::from((n - i) as i64));
        v /= BigRational::from_integer(BigInt::from((i + 1) as i64));
    }
    QC {
        re: v,
        im: BigRational::zero(),
    }
}

pub fn tangential_monomials(tdim: usize, depth: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    fn rec(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, left: usize, tdim: usize) {
        if pos == tdim {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e as u8);
            rec(out, cur, pos + 1, left - e, tdim);
            cur.pop();
        }
    }
    rec(&mut out, &mut Vec::new(), 0, depth, tdim);
    out.sort();
    out
}

fn det_rat(m: &RatMat) -> QC {
    match m.m {
        1 => m.at(0, 0).clone(),
        2 => &(m.at(0, 0) * m.at(1, 1)) - &(m.at(0, 1) * m.at(1, 0)),
        _ => {
            // Laplace expansion along the first row (small matrices only).
            let d = m.m;
            let mut acc = QC::zero();
            for j in 0..d {
                let mut sub = RatMat::zeros(d - 1);
                for r in 1..d {
                    let mut cc = 0;
                    for c in 0..d {
                        if c == j {
                            continue;
                        }
                        sub.set(r - 1, cc, m.at(r, c).clone());
                        cc += 1;
                    }
                }
                let mut term = m.at(0, j) * &det_rat(&sub);
                if j % 2 == 1 {
                    term = -&term;
                }
                acc = &acc + &term;
            }
            acc
        }
    }
}

/// Jet persistence: JSON with rational entries encoded as "num/den|num/den".
pub fn jet_to_json(jet: &BoundaryJet) -> serde_json::Value {
    let ser_series = |s: &Series| -> serde_json::Value {
        let terms: Vec<serde_json::Value> = s
            .terms
            .iter()
            .map(|(&key, mat)| {
                serde_json::json!({
                    "normal_power": skey_nor(key),
                    "tangential_powers": skey_tan(key, s.tdim),
                    "entries": mat.a.iter().map(|q| q.encode()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({"m": s.m, "terms": terms})
    };
    serde_json::json!({
        "kind": "boundary-jet",
        "conventions": {
            "tangential_indices": "alpha, beta in 1..n-1",
            "normal_power": "Taylor power of the inward normal coordinate",
            "entry_encoding": "re|im with each part num/den",
        },
        "n": jet.n,
        "rank": jet.m,
        "normal_depth": jet.k_depth,
        "tangential_depth": jet.t_depth,
        "cond_g": jet.cond_g,
        "g_inv": jet.g_inv.iter().map(&ser_series).collect::<Vec<_>>(),
        "a": jet.a.iter().map(&ser_series).collect::<Vec<_>>(),
        "q": ser_series(&jet.q),
    })
}

pub fn jet_from_json(v: &serde_json::Value) -> Result<BoundaryJet> {
    let bad = |msg: &str| Error::Config(format!("jet json: {msg}"));
    let n = v["n"].as_u64().ok_or_else(|| bad("missing n"))? as usize;
    let m = v["rank"].as_u64().ok_or_else(|| bad("missing rank"))? as usize;
    let k_depth = v["normal_depth"].as_u64().ok_or_else(|| bad("missing depth"))? as usize;
    let t_depth = v["tangential_depth"].as_u64().ok_or_else(|| bad("missing depth"))? as usize;
    let cond_g = v["cond_g"].as_bool().unwrap_or(false);
    let tdim = n - 1;
    let de_series = |sv: &serde_json::Value| -> Result<Series> {
        let sm = sv["m"].as_u64().ok_or_else(|| bad("series m"))? as usize;
        let mut s = Series::zero(sm, tdim);
        for t in sv["terms"].as_array().ok_or_else(|| bad("series terms"))? {
            let nor = t["normal_power"].as_u64().ok_or_else(|| bad("normal power"))? as u8;
            let tan: Vec<u8> = t["tangential_powers"]
                .as_array()
                .ok_or_else(|| bad("tangential powers"))?
                .iter()
                .map(|x| x.as_u64().unwrap_or(0) as u8)
                .collect();
            let entries = t["entries"].as_array().ok_or_else(|| bad("entries"))?;
            let mut mat = RatMat::zeros(sm);
            for (i, e) in entries.iter().enumerate() {
                let qc = QC::decode(e.as_str().ok_or_else(|| bad("entry"))?)
                    .ok_or_else(|| bad("entry encoding"))?;
                mat.a[i] = qc;
            }
            s.insert(nor, tan, mat);
        }
        Ok(s)
    };
    let g_arr = v["g_inv"].as_array().ok_or_else(|| bad("g_inv"))?;
    let a_arr = v["a"].as_array().ok_or_else(|| bad("a"))?;
    Ok(BoundaryJet {
        n,
        m,
        k_depth,
        t_depth,
        g_inv: g_arr.iter().map(&de_series).collect::<Result<Vec<_>>>()?,
        a: a_arr.iter().map(&de_series).collect::<Result<Vec<_>>>()?,
        q: de_series(&v["q"])?,
        cond_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_product_and_derivative() {
        // (1 + x t) * (x) = x + x^2 t; d/dx -> 1 + 2 x t.
        let mut a = Series::zero(1, 1);
        a.insert(0, vec![0], RatMat::eye(1));
        a.insert(1, vec![1], RatMat::eye(1));
        let mut b = Series::zero(1, 1);
        b.insert(0, vec![1], RatMat::eye(1));
        let prod = a.mul(&b, 4, 4);
        assert_eq!(prod.get(0, &[1]), RatMat::eye(1));
        assert_eq!(prod.get(1, &[2]), RatMat::eye(1));
        let d = prod.d_tan(0);
        assert_eq!(d.get(0, &[0]), RatMat::eye(1));
        assert_eq!(d.get(1, &[1]), RatMat::eye(1).scale(&QC::from_int(2)));
    }

    #[test]
    fn series_matrix_inverse_roundtrip() {
        // 2x2 scalar-series matrix with nontrivial series entries.
        let tdim = 2;
        let mk = |c00: i64, lin: i64| {
            let mut s = Series::zero(1, tdim);
            s.insert(0, vec![0, 0], RatMat {
                m: 1,
                a: vec![QC::from_int(c00)],
            });
            s.insert(1, vec![1, 0], RatMat {
                m: 1,
                a: vec![QC::from_ratio(lin, 3)],
            });
            s
        };
        let entries = vec![mk(2, 1), mk(0, -2), mk(0, 1), mk(1, 2)];
        let inv = invert_series_matrix(&entries, 2, 3, 3).unwrap();
        // Check M * M^-1 = Id within truncation.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Series::zero(1, tdim);
                for k in 0..2 {
                    acc = acc.add(&entries[i * 2 + k].mul(&inv[k * 2 + j], 3, 3));
                }
                if i == j {
                    acc = acc.sub(&Series::constant(1, tdim, RatMat::eye(1)));
                }
                assert!(acc.is_zero_within(3, 3), "inverse defect at ({i},{j})");
            }
        }
    }

    #[test]
    fn random_jet_is_normalized() {
        for seed in 0..5 {
            let jet = BoundaryJet::random_normalized(3, 2, 5, 3, seed, true);
            assert!(jet.spd_at_base(), "seed {seed}: SPD at base");
            assert!(jet.cond_g_holds(), "seed {seed}: mean-curvature condition");
            // A skew-Hermitian, Q Hermitian coefficient-wise.
            for a in &jet.a {
                for (_, mat) in &a.terms {
                    assert!(mat.add(&mat.adj()).is_zero(), "A coefficients skew-Hermitian");
                }
            }
            for (_, mat) in &jet.q.terms {
                assert!(mat.sub(&mat.adj()).is_zero(), "Q coefficients Hermitian");
            }
        }
    }

    #[test]
    fn flat_jet_trivially_normalized() {
        let jet = BoundaryJet::flat(3, 2, 4, 3);
        assert!(jet.spd_at_base());
        assert!(jet.cond_g_holds());
    }

    #[test]
    fn jet_json_roundtrip() {
        let jet = BoundaryJet::random_normalized(3, 2, 3, 2, 11, true);
        let json = jet_to_json(&jet);
        let back = jet_from_json(&json).unwrap();
        assert_eq!(jet.g_inv, back.g_inv);
        assert_eq!(jet.a, back.a);
        assert_eq!(jet.q, back.q);
    }

    #[test]
    fn monomial_enumeration() {
        let ms = tangential_monomials(2, 2);
        assert_eq!(ms.len(), 6, "degree <= 2 in 2 variables");
    }
}
