//! The boundary factorization recursion.
//!
//! The connection Laplacian plus potential factors modulo smoothing as
//! (D_t + iE - iB)(D_t + iB) with B a first-order tangential operator
//! whose full symbol b = b_1 + b_0 + b_{-1} + ... starts at b_1 = -s, and
//! the symbol-level identity reads
//!
//!   comp(b, b) + d_t b - E b - q1 - q2 + 2i g^{ab} A_a xi_b - G = 0,
//!
//! with comp the tangential composition sum over multi-indices alpha of
//! (1/alpha!) d_xi^alpha b . D_x^alpha b, E = (1/2) g_ab d_t g^ab,
//! q1 the subprincipal symbol of the metric Laplacian and
//! G = d*A - g^{ab} A_a A_b + Q. Collecting homogeneous degrees top-down
//! determines every lower symbol by division by 2s; the verifier recomposes
//! the identity and demands hard zeros degree by degree.

use std::collections::BTreeMap;

use super::elem::{
    inv_factorial_multi, multi_indices_of_weight, SymbolCtx, SymbolElem, XiPoly,
};
use super::jet::{invert_series_matrix, BoundaryJet, Series};
use super::qc::QC;
use crate::error::{Error, Result};

/// Auxiliary data shared by the recursion and the verifier.
pub struct SymbolAux {
    /// E(x) = (1/2) g_ab d_t g^ab as a scalar series (validity K-1).
    pub e_series: Series,
    pub e_tv: i32,
    pub e_nv: i32,
    /// q1 as a degree-1 element.
    pub q1: SymbolElem,
    /// q2 as a degree-2 element.
    pub q2: SymbolElem,
    /// G = d*A - g^{ab} A_a A_b + Q as a degree-0 element.
    pub g0: SymbolElem,
    /// Inhomogeneous part of the symbol identity:
    /// -q1 - q2 + 2i g^{ab} A_a xi_b - G.
    pub inhom: SymbolElem,
}

/// Full and boundary-restricted symbols of the factorization.
pub struct SymbolTable {
    pub n: usize,
    pub m: usize,
    pub depth_j: usize,
    /// full[t] = b_{1-t} with jet coefficients in (x', t).
    pub full: Vec<SymbolElem>,
    /// boundary[t] = b_{1-t} restricted to t = 0 (the observable data).
    pub boundary: Vec<SymbolElem>,
    pub ctx: SymbolCtx,
    pub ctx_boundary: SymbolCtx,
    pub aux: SymbolAux,
}

/// Builds the symbol context and auxiliary entries from a jet.
pub fn build_ctx(jet: &BoundaryJet) -> (SymbolCtx, SymbolAux) {
    let tdim = jet.tdim();
    let m = jet.m;
    let tcap = jet.t_depth;
    let ncap = jet.k_depth;
    let tv = jet.t_depth as i32;
    let nv = jet.k_depth as i32;

    // q2 polynomial: sum over alpha <= beta with symmetry factor.
    let mut q2poly: XiPoly = BTreeMap::new();
    for a in 0..tdim {
        for b in a..tdim {
            let mut k = vec![0u8; tdim];
            k[a] += 1;
            k[b] += 1;
            let coef = if a == b {
                jet.g_inv[a * tdim + b].clone()
            } else {
                jet.g_inv[a * tdim + b].scale(&QC::from_int(2))
            };
            if !coef.is_empty() {
                q2poly.insert(k, coef);
            }
        }
    }
    let ctx = SymbolCtx::new(tdim, m, tcap, ncap, q2poly);

    let g_low = jet.g_lower();

    // E = (1/2) sum_ab g_ab d_t g^ab.
    let mut e_series = Series::zero(1, tdim);
    for a in 0..tdim {
        for b in 0..tdim {
            let dg = jet.g_inv[a * tdim + b].d_nor();
            e_series = e_series.add(&g_low[a * tdim + b].mul(&dg, tcap, ncap));
        }
    }
    e_series = e_series.scale(&QC::from_ratio(1, 2));

    // L_a = d_a log|g| = - sum g_rs d_a g^rs.
    let mut log_der = Vec::with_capacity(tdim);
    for a in 0..tdim {
        let mut l = Series::zero(1, tdim);
        for r in 0..tdim {
            for s_ in 0..tdim {
                let d = jet.g_inv[r * tdim + s_].d_tan(a);
                l = l.add(&g_low[r * tdim + s_].mul(&d, tcap, ncap));
            }
        }
        log_der.push(l.neg());
    }

    // q1 coefficient of xi_b: -i ( (1/2) sum_a g^{ab} L_a + sum_a d_a g^{ab} ).
    let mut q1poly: XiPoly = BTreeMap::new();
    for b in 0..tdim {
        let mut cb = Series::zero(1, tdim);
        for a in 0..tdim {
            cb = cb.add(
                &jet.g_inv[a * tdim + b]
                    .mul(&log_der[a], tcap, ncap)
                    .scale(&QC::from_ratio(1, 2)),
            );
            cb = cb.add(&jet.g_inv[a * tdim + b].d_tan(a));
        }
        let cb = cb.scale(&(&QC::zero() - &QC::i())).scalar_to_matrix(m);
        if !cb.is_empty() {
            let mut k = vec![0u8; tdim];
            k[b] = 1;
            q1poly.insert(k, cb);
        }
    }
    let q1 = SymbolElem::from_poly(q1poly, m, tdim, tv - 1, nv);

    let q2_elem = SymbolElem::from_poly(
        ctx.q2
            .iter()
            .map(|(k, v)| (k.clone(), v.scalar_to_matrix(m)))
            .collect(),
        m,
        tdim,
        tv,
        nv,
    );

    // G = d*A - g^{ab} A_a A_b + Q with
    // d*A = -sum_ab [ (d_a g^{ab}) A_b + g^{ab} d_a A_b + (1/2) L_a g^{ab} A_b ].
    let mut dstar_a = Series::zero(m, tdim);
    for a in 0..tdim {
        for b in 0..tdim {
            let t1 = jet.g_inv[a * tdim + b].d_tan(a).mul(&jet.a[b], tcap, ncap);
            let t2 = jet.g_inv[a * tdim + b].mul(&jet.a[b].d_tan(a), tcap, ncap);
            let t3 = log_der[a]
                .mul(&jet.g_inv[a * tdim + b], tcap, ncap)
                .mul(&jet.a[b], tcap, ncap)
                .scale(&QC::from_ratio(1, 2));
            dstar_a = dstar_a.add(&t1).add(&t2).add(&t3);
        }
    }
    dstar_a = dstar_a.neg();
    let mut g0_series = dstar_a.add(&jet.q);
    for a in 0..tdim {
        for b in 0..tdim {
            let prod = jet.g_inv[a * tdim + b]
                .mul(&jet.a[a], tcap, ncap)
                .mul(&jet.a[b], tcap, ncap);
            g0_series = g0_series.sub(&prod);
        }
    }
    let mut g0poly: XiPoly = BTreeMap::new();
    if !g0_series.is_empty() {
        g0poly.insert(vec![0; tdim], g0_series);
    }
    let g0 = SymbolElem::from_poly(g0poly, m, tdim, tv - 1, nv);

    // 2 i g^{ab} A_a xi_b.
    let mut conn_poly: XiPoly = BTreeMap::new();
    for b in 0..tdim {
        let mut cb = Series::zero(m, tdim);
        for a in 0..tdim {
            cb = cb.add(&jet.g_inv[a * tdim + b].mul(&jet.a[a], tcap, ncap));
        }
        let cb = cb.scale(&(&QC::i() + &QC::i()));
        if !cb.is_empty() {
            let mut k = vec![0u8; tdim];
            k[b] = 1;
            conn_poly.insert(k, cb);
        }
    }
    let conn = SymbolElem::from_poly(conn_poly, m, tdim, tv, nv);

    let inhom = conn
        .sub(&q1, &ctx)
        .sub(&q2_elem, &ctx)
        .sub(&g0, &ctx);

    let aux = SymbolAux {
        e_series,
        e_tv: tv,
        e_nv: nv - 1,
        q1,
        q2: q2_elem,
        g0,
        inhom,
    };
    (ctx, aux)
}

/// Cache of iterated xi- and x-derivatives of the stored symbols, keyed by
/// multi-index; entries are built incrementally (mixed partials commute).
struct DerivCache<'a> {
    ctx: &'a SymbolCtx,
    xi: Vec<BTreeMap<Vec<u8>, SymbolElem>>,
    x: Vec<BTreeMap<Vec<u8>, SymbolElem>>,
}

impl<'a> DerivCache<'a> {
    fn new(b: &[SymbolElem], ctx: &'a SymbolCtx) -> Self {
        let mut xi = Vec::with_capacity(b.len());
        let mut x = Vec::with_capacity(b.len());
        for e in b {
            let mut m0: BTreeMap<Vec<u8>, SymbolElem> = BTreeMap::new();
            m0.insert(vec![0; ctx.tdim], e.clone());
            xi.push(m0.clone());
            x.push(m0);
        }
        DerivCache { ctx, xi, x }
    }

    fn push(&mut self, e: &SymbolElem, ctx: &SymbolCtx) {
        let mut m0: BTreeMap<Vec<u8>, SymbolElem> = BTreeMap::new();
        m0.insert(vec![0; ctx.tdim], e.clone());
        self.xi.push(m0.clone());
        self.x.push(m0);
    }

    fn get(&mut self, which_xi: bool, idx: usize, alpha: &[u8]) -> SymbolElem {
        let store = if which_xi { &self.xi } else { &self.x };
        if let Some(e) = store[idx].get(alpha) {
            return e.clone();
        }
        // Reduce along the first nonzero variable.
        let var = alpha.iter().position(|&e| e > 0).expect("nonzero index");
        let mut parent = alpha.to_vec();
        parent[var] -= 1;
        let base = self.get(which_xi, idx, &parent);
        let next = if which_xi {
            base.d_xi(var, self.ctx).truncate_to_validity()
        } else {
            base.d_x(Some(var), self.ctx).truncate_to_validity()
        };
        let store = if which_xi { &mut self.xi } else { &mut self.x };
        store[idx].insert(alpha.to_vec(), next.clone());
        next
    }
}

/// Degree-d part of the tangential composition comp(b, b) over the symbols
/// computed so far (b[t] has degree 1 - t).
fn comp_component(b: &[SymbolElem], d: i32, ctx: &SymbolCtx) -> SymbolElem {
    let mut cache = DerivCache::new(b, ctx);
    comp_component_cached(b.len(), d, ctx, &mut cache)
}

fn comp_component_cached(
    nb: usize,
    d: i32,
    ctx: &SymbolCtx,
    cache: &mut DerivCache,
) -> SymbolElem {
    let m = ctx.m;
    let tdim = ctx.tdim;
    let mut acc = SymbolElem::zero(m, tdim, i32::MAX, i32::MAX);
    for ta in 0..nb {
        let da = 1 - ta as i32;
        for tb in 0..nb {
            let db = 1 - tb as i32;
            let w = da + db - d;
            if w < 0 {
                continue;
            }
            for alpha in multi_indices_of_weight(tdim, w as usize) {
                // (1/alpha!) (d_xi^alpha e_a) (D_x^alpha e_b),
                // D_x^alpha = (-i)^{|alpha|} d_x^alpha.
                let left = cache.get(true, ta, &alpha);
                if left.is_structural_zero() {
                    continue;
                }
                let right = cache.get(false, tb, &alpha);
                if right.is_structural_zero() {
                    continue;
                }
                let mut coef = inv_factorial_multi(&alpha);
                for _ in 0..w {
                    coef = &coef * &(&QC::zero() - &QC::i());
                }
                let term = left
                    .mul(&right, ctx)
                    .hom_component(d)
                    .reduce(ctx)
                    .scale(&coef);
                acc = acc.add(&term, ctx);
            }
        }
    }
    acc.hom_component(d).reduce(ctx)
}

/// Runs the recursion to depth J, producing b_1 down to b_{1-J}.
pub fn factorize(jet: &BoundaryJet, depth_j: usize) -> Result<SymbolTable> {
    if jet.k_depth < depth_j + 1 {
        return Err(Error::JetDepth {
            have: jet.k_depth,
            need: depth_j + 1,
        });
    }
    let (ctx, aux) = build_ctx(jet);
    let tv = jet.t_depth as i32;
    let nv = jet.k_depth as i32;
    let mut b: Vec<SymbolElem> = vec![SymbolElem::minus_s(jet.m, ctx.tdim, tv, nv)];
    let mut cache = DerivCache::new(&b, &ctx);
    for t in 1..=depth_j {
        let d = 2 - t as i32;
        let comp = comp_component_cached(b.len(), d, &ctx, &mut cache);
        let latest = &b[t - 1];
        let dn = latest.d_x(None, &ctx).hom_component(d);
        let eb = latest
            .mul_series_left(&aux.e_series, aux.e_tv, aux.e_nv, &ctx)
            .hom_component(d);
        let inhom_d = aux.inhom.hom_component(d);
        let total = comp.add(&dn, &ctx).sub(&eb, &ctx).add(&inhom_d, &ctx);
        let next = total
            .mul_inv_2s(&ctx)
            .reduce(&ctx)
            .truncate_to_validity();
        cache.push(&next, &ctx);
        b.push(next);
    }
    let boundary: Vec<SymbolElem> = b.iter().map(|e| e.restrict()).collect();
    let ctx_boundary = ctx.restrict();
    Ok(SymbolTable {
        n: jet.n,
        m: jet.m,
        depth_j,
        full: b,
        boundary,
        ctx,
        ctx_boundary,
        aux,
    })
}

/// Outcome of recomposing the factorization identity.
#[derive(Debug, Clone)]
pub struct FactorizationReport {
    /// (degree, vanished, tangential validity, normal validity), top down.
    pub orders: Vec<(i32, bool, i32, i32)>,
    /// Highest degree with a surviving (nonzero) component.
    pub leading_surviving_order: Option<i32>,
    /// True when every degree above 1 - J vanished.
    pub pass: bool,
}

/// Composes the two factors and subtracts the full operator symbol; reports
/// the homogeneity order of the leading surviving term. The identity demands
/// that all degrees from 2 down to 2 - J vanish exactly; the first surviving
/// order is expected at 1 - J.
pub fn verify_factorization(table: &SymbolTable) -> FactorizationReport {
    let ctx = &table.ctx;
    let aux = &table.aux;
    let b = &table.full;
    let depth_j = table.depth_j as i32;
    let mut orders = Vec::new();
    let mut leading = None;
    let mut cache = DerivCache::new(b, ctx);
    for d in ((2 - depth_j)..=2).rev() {
        let comp = comp_component_cached(b.len(), d, ctx, &mut cache);
        let mut dn = SymbolElem::zero(table.m, ctx.tdim, i32::MAX, i32::MAX);
        let mut eb = SymbolElem::zero(table.m, ctx.tdim, i32::MAX, i32::MAX);
        for e in b.iter() {
            dn = dn.add(&e.d_x(None, ctx).hom_component(d), ctx);
            eb = eb.add(
                &e.mul_series_left(&aux.e_series, aux.e_tv, aux.e_nv, ctx)
                    .hom_component(d),
                ctx,
            );
        }
        let inhom_d = aux.inhom.hom_component(d);
        let res = comp
            .add(&dn, ctx)
            .sub(&eb, ctx)
            .add(&inhom_d, ctx)
            .reduce(ctx);
        let zero = res.is_zero_within_validity_ctx(ctx);
        if !zero && leading.is_none() {
            leading = Some(d);
        }
        orders.push((d, zero, res.tv, res.nv));
    }
    let pass = orders
        .iter()
        .filter(|(d, _, _, _)| *d >= 2 - depth_j)
        .all(|(_, z, _, _)| *z);
    FactorizationReport {
        orders,
        leading_surviving_order: leading,
        pass,
    }
}

/// Homogeneity of every stored symbol: b_j(lambda xi) = lambda^j b_j(xi),
/// checked by rational substitution.
pub fn homogeneity_holds(table: &SymbolTable, lambda_num: i64, lambda_den: i64) -> bool {
    let lam = QC::from_ratio(lambda_num, lambda_den);
    for (t, e) in table.full.iter().enumerate() {
        let d = 1 - t as i32;
        let scaled = e.scale_xi(&lam);
        // lambda^d as a rational.
        let mut c = QC::one();
        if d >= 0 {
            for _ in 0..d {
                c = &c * &lam;
            }
        } else {
            let inv = lam.inverse().unwrap();
            for _ in 0..-d {
                c = &c * &inv;
            }
        }
        if !scaled.equals(&e.scale(&c), &table.ctx) {
            return false;
        }
    }
    true
}

/// Lower-index boundary metric from the restricted q2 of a table: the
/// reconstruction-side view of g^{ab}(x', 0).
pub fn boundary_metric_from_q2(ctx_b: &SymbolCtx) -> (Vec<Series>, Vec<Series>) {
    let tdim = ctx_b.tdim;
    let mut g_inv = vec![Series::zero(1, tdim); tdim * tdim];
    for (k, v) in &ctx_b.q2 {
        let idxs: Vec<usize> = k
            .iter()
            .enumerate()
            .flat_map(|(i, &e)| std::iter::repeat(i).take(e as usize))
            .collect();
        assert_eq!(idxs.len(), 2, "q2 is quadratic");
        let (a, b) = (idxs[0], idxs[1]);
        if a == b {
            g_inv[a * tdim + a] = v.clone();
        } else {
            let half = v.scale(&QC::from_ratio(1, 2));
            g_inv[a * tdim + b] = half.clone();
            g_inv[b * tdim + a] = half;
        }
    }
    let g_low = invert_series_matrix(&g_inv, tdim, ctx_b.tcap, 0)
        .expect("boundary metric invertible");
    (g_inv, g_low)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_jet_symbols_vanish_below_principal() {
        let jet = BoundaryJet::flat(3, 2, 5, 3);
        let table = factorize(&jet, 3).unwrap();
        // b_1 = -s; b_0 = b_{-1} = b_{-2} = 0.
        for t in 1..=3 {
            assert!(
                table.full[t].is_structural_zero(),
                "flat jet: b_{} should vanish",
                1 - t as i32
            );
        }
        let report = verify_factorization(&table);
        assert!(report.pass);
        assert_eq!(report.leading_surviving_order, None, "flat: residual identically zero");
    }

    #[test]
    fn surface_principal_and_subprincipal_symbols() {
        // n = 2, Q = 0, constant g^{11} and A_1: b_0 = i sqrt(g11) A_1,
        // represented as i g^{11} A_1 xi_1 s / q2.
        let mut jet = BoundaryJet::flat(2, 1, 4, 2);
        // g^{11} = 4 (so sqrt = 2), A_1 = i a with a = 3/5.
        jet.g_inv[0] = Series::constant(1, 1, super::super::qc::RatMat {
            m: 1,
            a: vec![QC::from_int(4)],
        });
        let mut a_mat = super::super::qc::RatMat::zeros(1);
        a_mat.set(0, 0, &QC::i() * &QC::from_ratio(3, 5));
        jet.a[0] = Series::constant(1, 1, a_mat);
        let table = factorize(&jet, 2).unwrap();
        // Expected b_0 = i sqrt(g11) A_1 = i * 2 * (3/5 i) = -6/5.
        // In the ring: b_0 should equal (i g11 A1 xi_1) s / q2 which maps to
        // -6/5 under s = sqrt(g11) xi_1 on the positive ray. Compare exactly:
        // b0 * s = i g11 A1 xi1 => p-part = i * 4 * (3/5 i) xi1 = -12/5 xi1 over q2^N.
        let b0 = &table.boundary[1];
        let b0s = b0.mul_s(&table.ctx_boundary);
        // Divide the p-part by q2^{n_den} and compare with the linear poly.
        let (mut poly, qpart, n_den) = b0s.single_fraction(&table.ctx_boundary);
        assert!(qpart.values().all(|s| s.is_empty()), "no s part after mul_s");
        for _ in 0..n_den {
            let (q, r) = super::super::elem::div_q2(&poly, &table.ctx_boundary);
            assert!(r.values().all(|s| s.is_empty()), "exact division");
            poly = q;
        }
        let lin = poly.get(&vec![1u8]).cloned().expect("linear term present");
        let v = lin.value0();
        assert_eq!(v.at(0, 0), &QC::from_ratio(-12, 5), "b0 = i sqrt(g11) A1");
        let report = verify_factorization(&table);
        assert!(report.pass);
    }

    #[test]
    fn factorization_identity_random_n3_depth2() {
        for seed in [3u64, 17] {
            let jet = BoundaryJet::random_normalized(3, 2, 4, 3, seed, true);
            let table = factorize(&jet, 2).unwrap();
            let report = verify_factorization(&table);
            assert!(
                report.pass,
                "seed {seed}: residual orders {:?}",
                report.orders
            );
            // Residual order at most -1: degrees 2, 1, 0 vanish.
            for (d, z, _, _) in &report.orders {
                if *d >= 0 {
                    assert!(z, "degree {d} must vanish");
                }
            }
        }
    }

    #[test]
    fn factorization_identity_depth1() {
        let jet = BoundaryJet::random_normalized(3, 2, 3, 2, 5, true);
        let table = factorize(&jet, 1).unwrap();
        let report = verify_factorization(&table);
        assert!(report.pass, "orders {:?}", report.orders);
    }

    #[test]
    fn homogeneity_of_symbols() {
        let jet = BoundaryJet::random_normalized(3, 2, 4, 3, 9, true);
        let table = factorize(&jet, 2).unwrap();
        assert!(homogeneity_holds(&table, 2, 1), "b_j(2 xi) = 2^j b_j(xi)");
        assert!(homogeneity_holds(&table, 3, 2), "b_j(3/2 xi) scaling");
    }

    #[test]
    fn insufficient_depth_rejected() {
        let jet = BoundaryJet::flat(3, 1, 2, 2);
        assert!(matches!(
            factorize(&jet, 2),
            Err(Error::JetDepth { .. })
        ));
    }
}
