//! Symbols on the boundary cotangent space with a formal square root of the
//! tangential principal symbol q2 = g^{alpha beta} xi_alpha xi_beta.
//!
//! An element is a sum of fraction groups (P_g + Q_g s) / q2^g where P_g and
//! Q_g are polynomials in xi' with jet-series coefficients and s satisfies
//! s^2 = q2; under the embedding s = +sqrt(q2) this is a classical symbol,
//! and a term xi^mu s^e / q2^g is positively homogeneous of degree
//! |mu| + e - 2g. Sums keep groups separate (no common-denominator lifting),
//! s^2 = q2 cancels by moving between groups, and derivatives place the
//! quotient-rule terms into the next group, so no operation multiplies by
//! q2 except the zero test, which lifts once. Every manipulation stays in
//! the ring, so identity checks are hard equalities of rationals.
//!
//! Validity: tangential and normal trustworthiness bounds are carried along
//! (truncated jets only determine finitely many derivatives); operations
//! shrink them and zero checks are restricted to the valid range.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::jet::{invert_series_matrix, tangential_monomials, Series};
use super::qc::{QC, RatMat};

pub type XiKey = Vec<u8>;

/// Polynomial in xi' with series coefficients.
pub type XiPoly = BTreeMap<XiKey, Series>;

pub fn xipoly_add_into(out: &mut XiPoly, b: &XiPoly) {
    for (k, v) in b {
        match out.remove(k) {
            Some(c) => {
                let s = c.add(v);
                if !s.is_empty() {
                    out.insert(k.clone(), s);
                }
            }
            None => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
}

pub fn xipoly_add(a: &XiPoly, b: &XiPoly) -> XiPoly {
    let mut out = a.clone();
    xipoly_add_into(&mut out, b);
    out
}

pub fn xipoly_neg(a: &XiPoly) -> XiPoly {
    a.iter().map(|(k, v)| (k.clone(), v.neg())).collect()
}

pub fn xipoly_mul(a: &XiPoly, b: &XiPoly, tcap: usize, ncap: usize) -> XiPoly {
    let mut out: XiPoly = BTreeMap::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            let prod = va.mul(vb, tcap, ncap);
            if prod.is_empty() {
                continue;
            }
            let key: XiKey = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
            match out.remove(&key) {
                Some(c) => {
                    let s = c.add(&prod);
                    if !s.is_empty() {
                        out.insert(key, s);
                    }
                }
                None => {
                    out.insert(key, prod);
                }
            }
        }
    }
    out
}

pub fn scale_poly(poly: &XiPoly, c: &QC) -> XiPoly {
    if c.is_zero() {
        return BTreeMap::new();
    }
    poly.iter().map(|(k, v)| (k.clone(), v.scale(c))).collect()
}

fn diff_poly_xi(poly: &XiPoly, alpha: usize) -> XiPoly {
    let mut out: XiPoly = BTreeMap::new();
    for (k, v) in poly {
        if k[alpha] == 0 {
            continue;
        }
        let mut kk = k.clone();
        kk[alpha] -= 1;
        let term = v.scale(&QC::from_int(k[alpha] as i64));
        match out.remove(&kk) {
            Some(c) => {
                out.insert(kk, c.add(&term));
            }
            None => {
                out.insert(kk, term);
            }
        }
    }
    out
}

fn diff_poly_x(poly: &XiPoly, i: Option<usize>) -> XiPoly {
    poly.iter()
        .map(|(k, v)| {
            (
                k.clone(),
                match i {
                    Some(t) => v.d_tan(t),
                    None => v.d_nor(),
                },
            )
        })
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

/// Shared context: dimensions, caps, and the quadratic form q2.
#[derive(Debug, Clone)]
pub struct SymbolCtx {
    pub tdim: usize,
    pub m: usize,
    pub tcap: usize,
    pub ncap: usize,
    /// q2 as a xi-polynomial with scalar series coefficients.
    pub q2: XiPoly,
    /// Cached series inverse of the xi_1^2 coefficient of q2 (division).
    pub lead_inv: Series,
    /// Cached xi-gradient polynomials of q2.
    dq2_xi: Vec<XiPoly>,
}

impl SymbolCtx {
    pub fn new(tdim: usize, m: usize, tcap: usize, ncap: usize, q2: XiPoly) -> Self {
        let mut lead_key = vec![0u8; tdim];
        lead_key[0] = 2;
        let lead = q2
            .get(&lead_key)
            .cloned()
            .expect("q2 has a xi_1^2 coefficient");
        let lead_inv = invert_series_matrix(std::slice::from_ref(&lead), 1, tcap, ncap)
            .expect("leading metric coefficient invertible")
            .remove(0);
        let mut ctx = SymbolCtx {
            tdim,
            m,
            tcap,
            ncap,
            q2,
            lead_inv,
            dq2_xi: Vec::new(),
        };
        ctx.dq2_xi = (0..tdim).map(|a| diff_poly_xi(&ctx.q2, a)).collect();
        ctx
    }

    pub fn dq2_dxi(&self, alpha: usize) -> &XiPoly {
        &self.dq2_xi[alpha]
    }

    /// Coefficient-wise x-derivative of q2 (tangential index i, or normal).
    pub fn dq2_dx(&self, i: Option<usize>) -> XiPoly {
        diff_poly_x(&self.q2, i)
    }

    /// Restriction of the context to the boundary t = 0.
    pub fn restrict(&self) -> SymbolCtx {
        SymbolCtx::new(
            self.tdim,
            self.m,
            self.tcap,
            0,
            self.q2
                .iter()
                .map(|(k, v)| (k.clone(), v.restrict()))
                .filter(|(_, v)| !v.is_empty())
                .collect(),
        )
    }
}

/// One fraction group: (p + q s) / q2^{group key}.
#[derive(Debug, Clone, Default)]
pub struct Group {
    pub p: XiPoly,
    pub q: XiPoly,
}

impl Group {
    fn is_empty(&self) -> bool {
        self.p.is_empty() && self.q.is_empty()
    }
}

/// Sum of fraction groups with validity bounds.
#[derive(Debug, Clone)]
pub struct SymbolElem {
    pub m: usize,
    pub tdim: usize,
    pub groups: BTreeMap<u32, Group>,
    /// Trustworthy tangential order (negative: nothing trustworthy).
    pub tv: i32,
    /// Trustworthy normal order.
    pub nv: i32,
}

impl SymbolElem {
    pub fn zero(m: usize, tdim: usize, tv: i32, nv: i32) -> Self {
        SymbolElem {
            m,
            tdim,
            groups: BTreeMap::new(),
            tv,
            nv,
        }
    }

    /// Polynomial element (no s, no denominator).
    pub fn from_poly(p: XiPoly, m: usize, tdim: usize, tv: i32, nv: i32) -> Self {
        let mut groups = BTreeMap::new();
        if !p.is_empty() {
            groups.insert(
                0,
                Group {
                    p,
                    q: BTreeMap::new(),
                },
            );
        }
        SymbolElem {
            m,
            tdim,
            groups,
            tv,
            nv,
        }
    }

    /// The element -s (the principal symbol b_1 of the factorization).
    pub fn minus_s(m: usize, tdim: usize, tv: i32, nv: i32) -> Self {
        let mut q: XiPoly = BTreeMap::new();
        q.insert(
            vec![0; tdim],
            Series::constant(m, tdim, RatMat::eye(m).neg()),
        );
        let mut groups = BTreeMap::new();
        groups.insert(
            0,
            Group {
                p: BTreeMap::new(),
                q,
            },
        );
        SymbolElem {
            m,
            tdim,
            groups,
            tv,
            nv,
        }
    }

    pub fn is_structural_zero(&self) -> bool {
        self.groups.values().all(|g| g.is_empty())
    }

    fn insert_group(&mut self, key: u32, add_p: XiPoly, add_q: XiPoly) {
        if add_p.is_empty() && add_q.is_empty() {
            return;
        }
        let entry = self.groups.entry(key).or_default();
        xipoly_add_into(&mut entry.p, &add_p);
        xipoly_add_into(&mut entry.q, &add_q);
        if entry.is_empty() {
            self.groups.remove(&key);
        }
    }

    /// Single-fraction view (P + Q s)/q2^N: lifts all groups to the top
    /// denominator. Used by the zero test and the recovery reads.
    pub fn single_fraction(&self, ctx: &SymbolCtx) -> (XiPoly, XiPoly, u32) {
        let top = self.groups.keys().max().copied().unwrap_or(0);
        let mut p: XiPoly = BTreeMap::new();
        let mut q: XiPoly = BTreeMap::new();
        for (&g, grp) in &self.groups {
            let mut lp = grp.p.clone();
            let mut lq = grp.q.clone();
            for _ in g..top {
                lp = xipoly_mul(&lp, &ctx.q2, ctx.tcap, ctx.ncap);
                lq = xipoly_mul(&lq, &ctx.q2, ctx.tcap, ctx.ncap);
            }
            xipoly_add_into(&mut p, &lp);
            xipoly_add_into(&mut q, &lq);
        }
        (p, q, top)
    }

    /// Zero within the validity range (hard equality of coefficients),
    /// checked on the single-fraction normal form.
    pub fn is_zero_within_validity_ctx(&self, ctx: &SymbolCtx) -> bool {
        if self.tv < 0 || self.nv < 0 {
            return true; // nothing trustworthy to check
        }
        let (p, q, _) = self.single_fraction(ctx);
        let check = |poly: &XiPoly| {
            poly.values()
                .all(|s| s.is_zero_within(self.tv as usize, self.nv as usize))
        };
        check(&p) && check(&q)
    }

    pub fn add(&self, o: &SymbolElem, _ctx: &SymbolCtx) -> SymbolElem {
        let mut out = self.clone();
        out.tv = self.tv.min(o.tv);
        out.nv = self.nv.min(o.nv);
        for (&g, grp) in &o.groups {
            out.insert_group(g, grp.p.clone(), grp.q.clone());
        }
        out
    }

    pub fn sub(&self, o: &SymbolElem, ctx: &SymbolCtx) -> SymbolElem {
        self.add(&o.neg(), ctx)
    }

    pub fn neg(&self) -> SymbolElem {
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: xipoly_neg(&grp.p),
                            q: xipoly_neg(&grp.q),
                        },
                    )
                })
                .collect(),
            tv: self.tv,
            nv: self.nv,
        }
    }

    pub fn scale(&self, c: &QC) -> SymbolElem {
        if c.is_zero() {
            return SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        }
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: scale_poly(&grp.p, c),
                            q: scale_poly(&grp.q, c),
                        },
                    )
                })
                .collect(),
            tv: self.tv,
            nv: self.nv,
        }
    }

    /// Left-multiplication by a series coefficient (scalar broadcasts).
    pub fn mul_series_left(&self, s: &Series, s_tv: i32, s_nv: i32, ctx: &SymbolCtx) -> SymbolElem {
        let apply = |poly: &XiPoly| -> XiPoly {
            poly.iter()
                .map(|(k, v)| (k.clone(), s.mul(v, ctx.tcap, ctx.ncap)))
                .filter(|(_, v)| !v.is_empty())
                .collect()
        };
        SymbolElem {
            m: self.m.max(s.m),
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: apply(&grp.p),
                            q: apply(&grp.q),
                        },
                    )
                })
                .filter(|(_, grp)| !grp.is_empty())
                .collect(),
            tv: self.tv.min(s_tv),
            nv: self.nv.min(s_nv),
        }
    }

    /// Product of two symbols (matrix coefficients do not commute).
    /// s^2 = q2 cancels one denominator power instead of multiplying.
    pub fn mul(&self, o: &SymbolElem, ctx: &SymbolCtx) -> SymbolElem {
        let mut out = SymbolElem::zero(
            self.m.max(o.m),
            self.tdim,
            self.tv.min(o.tv),
            self.nv.min(o.nv),
        );
        for (&ga, grpa) in &self.groups {
            for (&gb, grpb) in &o.groups {
                let g = ga + gb;
                let pp = xipoly_mul(&grpa.p, &grpb.p, ctx.tcap, ctx.ncap);
                let qq = xipoly_mul(&grpa.q, &grpb.q, ctx.tcap, ctx.ncap);
                let pq = xipoly_mul(&grpa.p, &grpb.q, ctx.tcap, ctx.ncap);
                let qp = xipoly_mul(&grpa.q, &grpb.p, ctx.tcap, ctx.ncap);
                out.insert_group(g, pp, xipoly_add(&pq, &qp));
                if !qq.is_empty() {
                    if g >= 1 {
                        // q q' s^2 / q2^g = q q' / q2^{g-1}.
                        out.insert_group(g - 1, qq, BTreeMap::new());
                    } else {
                        out.insert_group(
                            0,
                            xipoly_mul(&qq, &ctx.q2, ctx.tcap, ctx.ncap),
                            BTreeMap::new(),
                        );
                    }
                }
            }
        }
        out
    }

    /// d / d xi_alpha: P' and Q' stay in group g; the quotient-rule and
    /// s-chain terms land in group g + 1 without any q2 multiplication.
    pub fn d_xi(&self, alpha: usize, ctx: &SymbolCtx) -> SymbolElem {
        let dq2 = ctx.dq2_dxi(alpha);
        let mut out = SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        for (&g, grp) in &self.groups {
            out.insert_group(g, diff_poly_xi(&grp.p, alpha), diff_poly_xi(&grp.q, alpha));
            let n = g as i64;
            if !grp.p.is_empty() && n != 0 {
                let t = scale_poly(
                    &xipoly_mul(&grp.p, dq2, ctx.tcap, ctx.ncap),
                    &QC::from_int(-n),
                );
                out.insert_group(g + 1, t, BTreeMap::new());
            }
            if !grp.q.is_empty() {
                let half_minus_n = QC {
                    re: BigRational::new(BigInt::from(1), BigInt::from(2))
                        - BigRational::from_integer(BigInt::from(n)),
                    im: BigRational::zero(),
                };
                let t = scale_poly(
                    &xipoly_mul(&grp.q, dq2, ctx.tcap, ctx.ncap),
                    &half_minus_n,
                );
                out.insert_group(g + 1, BTreeMap::new(), t);
            }
        }
        out
    }

    /// d / dx (tangential index i, or None for the normal variable).
    pub fn d_x(&self, i: Option<usize>, ctx: &SymbolCtx) -> SymbolElem {
        let (tv, nv) = match i {
            Some(_) => (self.tv - 1, self.nv),
            None => (self.tv, self.nv - 1),
        };
        let dq2 = ctx.dq2_dx(i);
        let mut out = SymbolElem::zero(self.m, self.tdim, tv, nv);
        for (&g, grp) in &self.groups {
            out.insert_group(g, diff_poly_x(&grp.p, i), diff_poly_x(&grp.q, i));
            if dq2.is_empty() {
                continue;
            }
            let n = g as i64;
            if !grp.p.is_empty() && n != 0 {
                let t = scale_poly(
                    &xipoly_mul(&grp.p, &dq2, ctx.tcap, ctx.ncap),
                    &QC::from_int(-n),
                );
                out.insert_group(g + 1, t, BTreeMap::new());
            }
            if !grp.q.is_empty() {
                let half_minus_n = QC {
                    re: BigRational::new(BigInt::from(1), BigInt::from(2))
                        - BigRational::from_integer(BigInt::from(n)),
                    im: BigRational::zero(),
                };
                let t = scale_poly(
                    &xipoly_mul(&grp.q, &dq2, ctx.tcap, ctx.ncap),
                    &half_minus_n,
                );
                out.insert_group(g + 1, BTreeMap::new(), t);
            }
        }
        out
    }

    /// Multiplication by 1/(2s): group g maps to (Q/2) at g (p-part) and
    /// (P/2) s at g + 1.
    pub fn mul_inv_2s(&self, _ctx: &SymbolCtx) -> SymbolElem {
        let half = QC::from_ratio(1, 2);
        let mut out = SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        for (&g, grp) in &self.groups {
            out.insert_group(g, scale_poly(&grp.q, &half), BTreeMap::new());
            out.insert_group(g + 1, BTreeMap::new(), scale_poly(&grp.p, &half));
        }
        out
    }

    /// Multiplication by s: Q s^2 / q2^g drops a group; P s stays.
    pub fn mul_s(&self, ctx: &SymbolCtx) -> SymbolElem {
        let mut out = SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        for (&g, grp) in &self.groups {
            out.insert_group(g, BTreeMap::new(), grp.p.clone());
            if !grp.q.is_empty() {
                if g >= 1 {
                    out.insert_group(g - 1, grp.q.clone(), BTreeMap::new());
                } else {
                    out.insert_group(
                        0,
                        xipoly_mul(&grp.q, &ctx.q2, ctx.tcap, ctx.ncap),
                        BTreeMap::new(),
                    );
                }
            }
        }
        out
    }

    /// Homogeneous component of degree d (terms of other degrees dropped).
    pub fn hom_component(&self, d: i32) -> SymbolElem {
        let filt = |poly: &XiPoly, s_extra: i32, g: u32| -> XiPoly {
            poly.iter()
                .filter(|(k, _)| {
                    k.iter().map(|&e| e as i32).sum::<i32>() + s_extra - 2 * g as i32 == d
                })
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: filt(&grp.p, 0, g),
                            q: filt(&grp.q, 1, g),
                        },
                    )
                })
                .filter(|(_, grp)| !grp.is_empty())
                .collect(),
            tv: self.tv,
            nv: self.nv,
        }
    }

    /// Split by parity under xi -> -xi (s is even): (even, odd).
    pub fn parity_split(&self) -> (SymbolElem, SymbolElem) {
        let filt = |poly: &XiPoly, want_even: bool| -> XiPoly {
            poly.iter()
                .filter(|(k, _)| {
                    let deg: u32 = k.iter().map(|&e| e as u32).sum();
                    (deg % 2 == 0) == want_even
                })
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        let build = |want_even: bool| SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: filt(&grp.p, want_even),
                            q: filt(&grp.q, want_even),
                        },
                    )
                })
                .filter(|(_, grp)| !grp.is_empty())
                .collect(),
            tv: self.tv,
            nv: self.nv,
        };
        (build(true), build(false))
    }

    /// Substitution xi -> lambda xi (with s -> lambda s).
    pub fn scale_xi(&self, lambda: &QC) -> SymbolElem {
        let pow = |k: i64| -> QC {
            let mut v = QC::one();
            if k >= 0 {
                for _ in 0..k {
                    v = &v * lambda;
                }
            } else {
                let inv = lambda.inverse().expect("nonzero scaling");
                for _ in 0..-k {
                    v = &v * &inv;
                }
            }
            v
        };
        let app = |poly: &XiPoly, extra: i64, g: u32| -> XiPoly {
            poly.iter()
                .map(|(k, v)| {
                    let deg: i64 = k.iter().map(|&e| e as i64).sum();
                    (k.clone(), v.scale(&pow(deg + extra - 2 * g as i64)))
                })
                .collect()
        };
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: app(&grp.p, 0, g),
                            q: app(&grp.q, 1, g),
                        },
                    )
                })
                .collect(),
            tv: self.tv,
            nv: self.nv,
        }
    }

    /// Structural equality via the difference's zero test.
    pub fn equals(&self, o: &SymbolElem, ctx: &SymbolCtx) -> bool {
        self.sub(o, ctx).is_zero_within_validity_ctx(ctx)
    }

    /// Restriction of all coefficients to the boundary. The result must be
    /// paired with the restricted context.
    pub fn restrict(&self) -> SymbolElem {
        let res = |poly: &XiPoly| -> XiPoly {
            poly.iter()
                .map(|(k, v)| (k.clone(), v.restrict()))
                .filter(|(_, v)| !v.is_empty())
                .collect()
        };
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: res(&grp.p),
                            q: res(&grp.q),
                        },
                    )
                })
                .filter(|(_, grp)| !grp.is_empty())
                .collect(),
            tv: self.tv,
            nv: 0,
        }
    }

    /// Moves groups down where division by q2 is exact within the validity
    /// window, merging into lower groups.
    pub fn reduce(&self, ctx: &SymbolCtx) -> SymbolElem {
        if self.tv < 0 || self.nv < 0 {
            return SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        }
        let (tvu, nvu) = (self.tv as usize, self.nv as usize);
        let mut out = SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        for (&g, grp) in &self.groups {
            let mut cur_g = g;
            let mut p = prune_poly(&grp.p, tvu, nvu);
            let mut q = prune_poly(&grp.q, tvu, nvu);
            while cur_g > 0 {
                let Some(pq) = div_q2_within(&p, ctx, tvu, nvu) else {
                    break;
                };
                let Some(qq) = div_q2_within(&q, ctx, tvu, nvu) else {
                    break;
                };
                p = pq;
                q = qq;
                cur_g -= 1;
            }
            out.insert_group(cur_g, p, q);
        }
        out
    }

    /// Eager truncation of coefficients to the validity window.
    pub fn truncate_to_validity(&self) -> SymbolElem {
        if self.tv < 0 || self.nv < 0 {
            return SymbolElem::zero(self.m, self.tdim, self.tv, self.nv);
        }
        let (tvu, nvu) = (self.tv as usize, self.nv as usize);
        SymbolElem {
            m: self.m,
            tdim: self.tdim,
            groups: self
                .groups
                .iter()
                .map(|(&g, grp)| {
                    (
                        g,
                        Group {
                            p: prune_poly(&grp.p, tvu, nvu),
                            q: prune_poly(&grp.q, tvu, nvu),
                        },
                    )
                })
                .filter(|(_, grp)| !grp.is_empty())
                .collect(),
            tv: self.tv,
            nv: self.nv,
        }
    }
}

fn prune_poly(poly: &XiPoly, tcap: usize, ncap: usize) -> XiPoly {
    poly.iter()
        .map(|(k, v)| (k.clone(), v.truncate(tcap, ncap)))
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

/// Exact division of a xi-polynomial by q2, treating it as a polynomial in
/// xi_1 with invertible leading series coefficient. Returns (quotient,
/// remainder); the remainder has xi_1-degree < 2.
pub fn div_q2(poly: &XiPoly, ctx: &SymbolCtx) -> (XiPoly, XiPoly) {
    if poly.is_empty() {
        return (BTreeMap::new(), BTreeMap::new());
    }
    let a_inv = &ctx.lead_inv;
    let mut rem = poly.clone();
    let mut quo: XiPoly = BTreeMap::new();
    loop {
        let lead: Option<XiKey> = rem
            .keys()
            .filter(|k| k[0] >= 2)
            .max_by_key(|k| k[0])
            .cloned();
        let Some(klead) = lead else { break };
        let d1 = klead[0];
        let terms: Vec<(XiKey, Series)> = rem
            .iter()
            .filter(|(k, _)| k[0] == d1)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut q_step: XiPoly = BTreeMap::new();
        for (k, v) in &terms {
            let mut kk = k.clone();
            kk[0] -= 2;
            let t = a_inv.mul(v, ctx.tcap, ctx.ncap);
            if !t.is_empty() {
                q_step.insert(kk, t);
            }
        }
        if q_step.is_empty() {
            break;
        }
        let sub = xipoly_mul(&q_step, &ctx.q2, ctx.tcap, ctx.ncap);
        rem = xipoly_add(&rem, &xipoly_neg(&sub));
        xipoly_add_into(&mut quo, &q_step);
    }
    (quo, rem)
}

/// Division by q2 that is exact within a validity window: the remainder must
/// vanish there; the quotient is truncated to the window.
pub fn div_q2_within(poly: &XiPoly, ctx: &SymbolCtx, tv: usize, nv: usize) -> Option<XiPoly> {
    if poly.is_empty() {
        return Some(XiPoly::new());
    }
    let (q, r) = div_q2(poly, ctx);
    if !r.values().all(|s| s.is_zero_within(tv, nv)) {
        return None;
    }
    Some(prune_poly(&q, tv, nv))
}

/// Enumerates tangential multi-indices of exact weight w.
pub fn multi_indices_of_weight(tdim: usize, w: usize) -> Vec<Vec<u8>> {
    tangential_monomials(tdim, w)
        .into_iter()
        .filter(|k| k.iter().map(|&e| e as usize).sum::<usize>() == w)
        .collect()
}

/// 1 / alpha! for a multi-index.
pub fn inv_factorial_multi(alpha: &[u8]) -> QC {
    let mut denom = BigRational::one();
    for &e in alpha {
        for i in 2..=e as i64 {
            denom *= BigRational::from_integer(BigInt::from(i));
        }
    }
    QC {
        re: BigRational::one() / denom,
        im: BigRational::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_ctx(tdim: usize, m: usize) -> SymbolCtx {
        let mut q2: XiPoly = BTreeMap::new();
        for a in 0..tdim {
            let mut k = vec![0u8; tdim];
            k[a] = 2;
            q2.insert(k, Series::constant(1, tdim, RatMat::eye(1)));
        }
        SymbolCtx::new(tdim, m, 4, 4, q2)
    }

    #[test]
    fn s_squared_is_q2() {
        let ctx = flat_ctx(2, 1);
        let s = SymbolElem::minus_s(1, 2, 4, 4);
        let sq = s.mul(&s, &ctx);
        let expect = SymbolElem::from_poly(ctx.q2.clone(), 1, 2, 4, 4);
        assert!(sq.equals(&expect, &ctx), "(-s)^2 = q2");
    }

    #[test]
    fn xi_derivative_of_s() {
        let ctx = flat_ctx(2, 1);
        let s = SymbolElem::minus_s(1, 2, 4, 4);
        let ds = s.d_xi(0, &ctx);
        // d(-s)/dxi_0 = -xi_0/s; times (-s) gives xi_0.
        let prod = ds.mul(&SymbolElem::minus_s(1, 2, 4, 4), &ctx);
        let mut k = vec![0u8; 2];
        k[0] = 1;
        let mut expect_poly: XiPoly = BTreeMap::new();
        expect_poly.insert(k, Series::constant(1, 2, RatMat::eye(1)));
        let expect = SymbolElem::from_poly(expect_poly, 1, 2, 4, 4);
        assert!(prod.equals(&expect, &ctx), "d(-s)/dxi * (-s) = xi_0");
    }

    #[test]
    fn homogeneity_filter_and_scaling() {
        let ctx = flat_ctx(2, 1);
        let s = SymbolElem::minus_s(1, 2, 4, 4);
        let inv = s.mul_inv_2s(&ctx); // (-s)/(2s) = -1/2, degree 0
        let h0 = inv.hom_component(0);
        assert!(!h0.is_structural_zero());
        assert!(inv.hom_component(1).is_structural_zero());
        let scaled = s.scale_xi(&QC::from_int(2));
        let twice = s.scale(&QC::from_int(2));
        assert!(scaled.equals(&twice, &ctx), "s is homogeneous of degree 1");
    }

    #[test]
    fn division_by_q2_exact() {
        let ctx = flat_ctx(2, 1);
        let mut lin: XiPoly = BTreeMap::new();
        lin.insert(vec![1, 0], Series::constant(1, 2, RatMat::eye(1)));
        lin.insert(
            vec![0, 1],
            Series::constant(1, 2, RatMat::eye(1).scale(&QC::from_int(3))),
        );
        let prod = xipoly_mul(&lin, &ctx.q2, 4, 4);
        let (quo, rem) = div_q2(&prod, &ctx);
        assert!(rem.values().all(|s| s.is_empty()), "exact division");
        let diff = xipoly_add(&quo, &xipoly_neg(&lin));
        assert!(diff.values().all(|s| s.is_empty()), "quotient recovered");
    }

    #[test]
    fn parity_split_of_mixed_element() {
        let ctx = flat_ctx(2, 1);
        let s = SymbolElem::minus_s(1, 2, 4, 4);
        let mut lin: XiPoly = BTreeMap::new();
        lin.insert(vec![1, 0], Series::constant(1, 2, RatMat::eye(1)));
        let e = SymbolElem::from_poly(lin, 1, 2, 4, 4).add(&s, &ctx);
        let (even, odd) = e.parity_split();
        // s sits at even |mu| = 0 with a q-part; xi_0 is odd with a p-part.
        assert!(even.groups.values().any(|g| !g.q.is_empty()));
        assert!(even.groups.values().all(|g| g.p.is_empty()));
        assert!(odd.groups.values().any(|g| !g.p.is_empty()));
        assert!(odd.groups.values().all(|g| g.q.is_empty()));
    }

    #[test]
    fn mul_s_and_inv_2s_are_inverse_up_to_factor() {
        let ctx = flat_ctx(2, 1);
        let s = SymbolElem::minus_s(1, 2, 4, 4);
        let e = s.d_xi(0, &ctx); // genuine 1/s structure
        let back = e.mul_inv_2s(&ctx).mul_s(&ctx).scale(&QC::from_int(2));
        assert!(back.equals(&e, &ctx), "2 * (e/(2s)) * s = e");
    }
}
