//! Covariant field calculus on the chart grid.
//!
//! Node-valued operators (curvature, gauge pullback) use centered second
//! order differences, one-sided second order at the boundary.
//!
//! The one-form pair covariant_derivative / codifferential is staggered:
//! component nu of a one-form section is sampled at the midpoint of the
//! forward edge in direction nu, so the derivative is a centered difference
//! at the edge midpoint. The codifferential is the exact adjoint of the
//! covariant derivative with respect to the measure-weighted inner products;
//! this is the divergence-form discretization, and composing the two yields
//! the compact 5-point connection Laplacian stencil used by the solver.
//!
//! Edge weights follow the dual-cell (finite volume) convention: edges that
//! run along a boundary face carry half weight, so nodal measures pick up
//! the trapezoidal 1/2 and 1/4 factors at boundary and corner nodes.

use crate::cmat::{C64, CMat};
use crate::fields::{ConnectionField, OneFormSection, SectionField, TwoFormField};
use crate::grid::{ChartGrid, Topology};
use crate::metric::MetricField;

// ---------------------------------------------------------------------------
// Node-centered difference stencils
// ---------------------------------------------------------------------------

/// Stencil of the second-order first derivative along an axis at a node:
/// centered where possible, one-sided second order at the chart boundary.
pub fn diff_stencil(grid: &ChartGrid, node: usize, axis: usize) -> [(usize, f64); 3] {
    let h = if axis == 0 { grid.h1 } else { grid.h2 };
    let lo = grid.neighbor(node, axis, -1);
    let hi = grid.neighbor(node, axis, 1);
    match (lo, hi) {
        (Some(l), Some(r)) => [(l, -0.5 / h), (node, 0.0), (r, 0.5 / h)],
        (None, Some(r)) => {
            let rr = grid.neighbor(r, axis, 1).expect("grid has >= 3 nodes per axis");
            [(node, -1.5 / h), (r, 2.0 / h), (rr, -0.5 / h)]
        }
        (Some(l), None) => {
            let ll = grid.neighbor(l, axis, -1).expect("grid has >= 3 nodes per axis");
            [(node, 1.5 / h), (l, -2.0 / h), (ll, 0.5 / h)]
        }
        (None, None) => unreachable!("grid axes have at least 3 nodes"),
    }
}

/// Centered/one-sided derivative of a matrix field.
pub fn diff_mat(grid: &ChartGrid, f: &[CMat], node: usize, axis: usize) -> CMat {
    let st = diff_stencil(grid, node, axis);
    let mut out = CMat::zeros(f[node].m);
    for (j, c) in st {
        if c != 0.0 {
            out = out.add(&f[j].scale(C64::new(c, 0.0)));
        }
    }
    out
}

/// Centered/one-sided derivative of a vector (section) field.
pub fn diff_vec(grid: &ChartGrid, f: &[Vec<C64>], node: usize, axis: usize) -> Vec<C64> {
    let st = diff_stencil(grid, node, axis);
    let m = f[node].len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    for (j, c) in st {
        if c != 0.0 {
            for k in 0..m {
                out[k] += f[j][k] * c;
            }
        }
    }
    out
}

/// Centered/one-sided derivative of a scalar field.
pub fn diff_scalar(grid: &ChartGrid, f: &[f64], node: usize, axis: usize) -> f64 {
    let st = diff_stencil(grid, node, axis);
    st.iter().map(|&(j, c)| c * f[j]).sum()
}

// ---------------------------------------------------------------------------
// Curvature and gauge action (node-centered)
// ---------------------------------------------------------------------------

/// F12 = d1 A2 - d2 A1 + A1 A2 - A2 A1.
pub fn curvature(grid: &ChartGrid, a: &ConnectionField) -> TwoFormField {
    let n = grid.num_nodes();
    let mut f12 = Vec::with_capacity(n);
    for i in 0..n {
        let d1a2 = diff_mat(grid, &a.a2, i, 0);
        let d2a1 = diff_mat(grid, &a.a1, i, 1);
        let comm = a.a1[i].commutator(&a.a2[i]);
        f12.push(d1a2.sub(&d2a1).add(&comm));
    }
    TwoFormField { m: a.m, f12 }
}

/// Pullback F*(A) = F^-1 dF + F^-1 A F, componentwise.
///
/// Fails when F is singular somewhere, citing the node of minimal |det F|.
pub fn gauge_pullback(
    grid: &ChartGrid,
    f: &crate::fields::GaugeField,
    a: &ConnectionField,
) -> crate::error::Result<ConnectionField> {
    let (margin, node) = f.invertibility_margin();
    if margin <= 0.0 {
        return Err(crate::error::Error::SingularGauge {
            node,
            det_abs: margin,
        });
    }
    let n = grid.num_nodes();
    let mut a1 = Vec::with_capacity(n);
    let mut a2 = Vec::with_capacity(n);
    for i in 0..n {
        let finv = f.f[i].inverse().ok_or(crate::error::Error::SingularGauge {
            node: i,
            det_abs: 0.0,
        })?;
        let d1f = diff_mat(grid, &f.f, i, 0);
        let d2f = diff_mat(grid, &f.f, i, 1);
        a1.push(finv.mul(&d1f).add(&finv.mul(&a.a1[i]).mul(&f.f[i])));
        a2.push(finv.mul(&d2f).add(&finv.mul(&a.a2[i]).mul(&f.f[i])));
    }
    Ok(ConnectionField {
        m: a.m,
        a1,
        a2,
        unitary: a.unitary && f.unitary,
    })
}

// ---------------------------------------------------------------------------
// Staggered one-form pair: covariant derivative and codifferential
// ---------------------------------------------------------------------------

/// Number of x2 edges per x1-row: n2-1 open, n2 periodic.
fn n_edges2(grid: &ChartGrid) -> usize {
    if grid.periodic {
        grid.n2
    } else {
        grid.n2 - 1
    }
}

/// Forward-edge endpoints in direction axis from (i1, i2), if the edge exists.
fn edge_ends(grid: &ChartGrid, i1: usize, i2: usize, axis: usize) -> Option<(usize, usize)> {
    let a = grid.index(i1, i2);
    grid.neighbor(a, axis, 1).map(|b| (a, b))
}

/// Dual-cell weight of an edge: 1 in the interior, 1/2 along a boundary face.
pub(crate) fn edge_weight(grid: &ChartGrid, i1: usize, i2: usize, axis: usize) -> f64 {
    match axis {
        0 => {
            if !grid.periodic && (i2 == 0 || i2 == grid.n2 - 1) {
                0.5
            } else {
                1.0
            }
        }
        _ => {
            if i1 == 0 || i1 == grid.n1 - 1 {
                0.5
            } else {
                1.0
            }
        }
    }
}

/// Nodal measure: density times cell area times the dual-cell fraction.
pub(crate) fn node_measure(grid: &ChartGrid, metric: &MetricField, node: usize) -> f64 {
    let (i1, i2) = grid.coords_of(node);
    let mut tau = 1.0;
    if i1 == 0 || i1 == grid.n1 - 1 {
        tau *= 0.5;
    }
    if !grid.periodic && (i2 == 0 || i2 == grid.n2 - 1) {
        tau *= 0.5;
    }
    metric.density[node] * grid.h1 * grid.h2 * tau
}

/// Covariant derivative d_A u = (du + A u) sampled at forward edge midpoints.
///
/// Component nu stored at node (i1, i2) is the value on the edge from that
/// node to its +nu neighbor; slots without a forward edge stay zero.
pub fn covariant_derivative(
    grid: &ChartGrid,
    a: &ConnectionField,
    u: &SectionField,
) -> OneFormSection {
    let m = u.m;
    let mut c1 = SectionField::zeros(grid, m);
    let mut c2 = SectionField::zeros(grid, m);
    for i1 in 0..grid.n1 {
        for i2 in 0..grid.n2 {
            if let Some((p, q)) = edge_ends(grid, i1, i2, 0) {
                c1.v[p] = edge_covariant(&a.a1[p], &a.a1[q], &u.v[p], &u.v[q], grid.h1);
            }
            if i2 < n_edges2(grid) {
                if let Some((p, q)) = edge_ends(grid, i1, i2, 1) {
                    c2.v[p] = edge_covariant(&a.a2[p], &a.a2[q], &u.v[p], &u.v[q], grid.h2);
                }
            }
        }
    }
    OneFormSection { c1, c2 }
}

fn edge_covariant(ap: &CMat, aq: &CMat, up: &[C64], uq: &[C64], h: f64) -> Vec<C64> {
    let m = up.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    // (uq - up)/h + Abar * (up + uq)/2
    let abar = ap.add(aq).scale(C64::new(0.5, 0.0));
    for r in 0..m {
        out[r] = (uq[r] - up[r]) / h;
        for c in 0..m {
            out[r] += abar.at(r, c) * (up[c] + uq[c]) * 0.5;
        }
    }
    out
}

/// Metric pairing of edge-sampled one-forms: maps edge values to weighted
/// edge values, with the g12 cross term mediated by cell averages.
pub(crate) fn metric_weight_oneform(
    grid: &ChartGrid,
    metric: &MetricField,
    alpha: &OneFormSection,
) -> OneFormSection {
    let m = alpha.c1.m;
    let area = grid.h1 * grid.h2;
    let mut w1 = SectionField::zeros(grid, m);
    let mut w2 = SectionField::zeros(grid, m);
    // Diagonal parts on edges.
    for i1 in 0..grid.n1 {
        for i2 in 0..grid.n2 {
            if let Some((p, q)) = edge_ends(grid, i1, i2, 0) {
                let w = 0.5
                    * (metric.density[p] * metric.ginv[p][0]
                        + metric.density[q] * metric.ginv[q][0])
                    * area
                    * edge_weight(grid, i1, i2, 0);
                for r in 0..m {
                    w1.v[p][r] += alpha.c1.v[p][r] * w;
                }
            }
            if i2 < n_edges2(grid) {
                if let Some((p, q)) = edge_ends(grid, i1, i2, 1) {
                    let w = 0.5
                        * (metric.density[p] * metric.ginv[p][2]
                            + metric.density[q] * metric.ginv[q][2])
                        * area
                        * edge_weight(grid, i1, i2, 1);
                    for r in 0..m {
                        w2.v[p][r] += alpha.c2.v[p][r] * w;
                    }
                }
            }
        }
    }
    // Cross term via cells when g12 is present.
    if !metric.is_diagonal() {
        for i1 in 0..grid.n1 - 1 {
            for i2 in 0..n_edges2(grid) {
                let p00 = grid.index(i1, i2);
                let p10 = grid.neighbor(p00, 0, 1).unwrap();
                let p01 = grid.neighbor(p00, 1, 1).unwrap();
                let p11 = grid.neighbor(p10, 1, 1).unwrap();
                let wc = 0.25
                    * (metric.density[p00] * metric.ginv[p00][1]
                        + metric.density[p10] * metric.ginv[p10][1]
                        + metric.density[p01] * metric.ginv[p01][1]
                        + metric.density[p11] * metric.ginv[p11][1])
                    * area;
                if wc == 0.0 {
                    continue;
                }
                // Cell averages of each component.
                for r in 0..m {
                    let d1 = (alpha.c1.v[p00][r] + alpha.c1.v[p01][r]) * 0.5;
                    let d2 = (alpha.c2.v[p00][r] + alpha.c2.v[p10][r]) * 0.5;
                    // W applied: x-edges of the cell receive g12 * avg(d2), etc.
                    w1.v[p00][r] += d2 * (0.5 * wc);
                    w1.v[p01][r] += d2 * (0.5 * wc);
                    w2.v[p00][r] += d1 * (0.5 * wc);
                    w2.v[p10][r] += d1 * (0.5 * wc);
                }
            }
        }
    }
    OneFormSection { c1: w1, c2: w2 }
}

/// Twisted codifferential of an edge-sampled one-form, in divergence form.
///
/// Interior rows are the exact measure-weighted adjoint of the covariant
/// derivative, so adjointness sum_nodes mu <d_A^* alpha, v> =
/// sum_edges <W alpha, d_A v> holds exactly for interior-supported v, and
/// composing with covariant_derivative reproduces the assembled operator.
/// Boundary rows (where the adjoint would pick up the boundary flux) use a
/// one-sided divergence of the metric flux instead, second order and exact
/// on linear data.
pub fn codifferential(
    grid: &ChartGrid,
    metric: &MetricField,
    a: &ConnectionField,
    alpha: &OneFormSection,
) -> SectionField {
    let m = alpha.c1.m;
    let weighted = metric_weight_oneform(grid, metric, alpha);
    let mut out = SectionField::zeros(grid, m);
    for i1 in 0..grid.n1 {
        for i2 in 0..grid.n2 {
            if let Some((p, q)) = edge_ends(grid, i1, i2, 0) {
                distribute_adjoint(&mut out, &a.a1[p], &a.a1[q], p, q, grid.h1, &weighted.c1.v[p]);
            }
            if i2 < n_edges2(grid) {
                if let Some((p, q)) = edge_ends(grid, i1, i2, 1) {
                    distribute_adjoint(
                        &mut out,
                        &a.a2[p],
                        &a.a2[q],
                        p,
                        q,
                        grid.h2,
                        &weighted.c2.v[p],
                    );
                }
            }
        }
    }
    for node in 0..grid.num_nodes() {
        let mu = node_measure(grid, metric, node);
        for r in 0..m {
            out.v[node][r] /= mu;
        }
    }
    // Boundary rows: one-sided flux divergence.
    for &(node, _) in &grid.boundary_nodes {
        out.v[node] = boundary_codifferential(grid, metric, a, alpha, node);
    }
    out
}

/// Metric flux component nu at an edge midpoint: rho (g^{nu 1} a1 + g^{nu 2} a2)
/// with the transverse component interpolated from neighboring edges.
fn edge_flux(
    grid: &ChartGrid,
    metric: &MetricField,
    alpha: &OneFormSection,
    i1: usize,
    i2: usize,
    axis: usize,
) -> Vec<C64> {
    let m = alpha.c1.m;
    let (p, q) = edge_ends(grid, i1, i2, axis).expect("edge exists");
    let own = if axis == 0 { &alpha.c1.v[p] } else { &alpha.c2.v[p] };
    let rho_g_own = 0.5
        * (metric.density[p] * metric.ginv[p][2 * axis]
            + metric.density[q] * metric.ginv[q][2 * axis]);
    let rho_g_cross = 0.5 * (metric.density[p] * metric.ginv[p][1] + metric.density[q] * metric.ginv[q][1]);
    let mut out: Vec<C64> = own.iter().map(|z| z * rho_g_own).collect();
    if rho_g_cross != 0.0 {
        // Average the transverse component over the (up to four) edges
        // adjacent to this edge's endpoints.
        let other = if axis == 0 { &alpha.c2 } else { &alpha.c1 };
        let oaxis = 1 - axis;
        let mut acc = vec![C64::new(0.0, 0.0); m];
        let mut count = 0.0;
        for &node in &[p, q] {
            if edge_ends(grid, grid.coords_of(node).0, grid.coords_of(node).1, oaxis).is_some() {
                for r in 0..m {
                    acc[r] += other.v[node][r];
                }
                count += 1.0;
            }
            if let Some(back) = grid.neighbor(node, oaxis, -1) {
                for r in 0..m {
                    acc[r] += other.v[back][r];
                }
                count += 1.0;
            }
        }
        if count > 0.0 {
            for r in 0..m {
                out[r] += acc[r] / count * rho_g_cross;
            }
        }
    }
    out
}

/// One-sided divergence-form codifferential at a boundary node.
fn boundary_codifferential(
    grid: &ChartGrid,
    metric: &MetricField,
    a: &ConnectionField,
    alpha: &OneFormSection,
    node: usize,
) -> Vec<C64> {
    let m = alpha.c1.m;
    let (i1, i2) = grid.coords_of(node);
    let mut div = vec![C64::new(0.0, 0.0); m];
    for axis in 0..2 {
        let h = if axis == 0 { grid.h1 } else { grid.h2 };
        let n_ax = if axis == 0 { grid.n1 } else { grid.n2 };
        let pos = if axis == 0 { i1 } else { i2 };
        let periodic_ax = axis == 1 && grid.periodic;
        // Flux samples at edge midpoints along this axis; derivative at the
        // node position from the nearest 2-3 samples.
        let flux_at = |k: i64| -> Option<Vec<C64>> {
            let kk = if periodic_ax {
                (k.rem_euclid(n_ax as i64)) as usize
            } else if k < 0 || k as usize >= n_ax - 1 {
                return None;
            } else {
                k as usize
            };
            let (e1, e2) = if axis == 0 { (kk, i2) } else { (i1, kk) };
            Some(edge_flux(grid, metric, alpha, e1, e2, axis))
        };
        let deriv: Option<Vec<C64>> = if periodic_ax || (pos > 0 && pos < n_ax - 1) {
            // Centered: (F(pos+1/2) - F(pos-1/2)) / h.
            match (flux_at(pos as i64), flux_at(pos as i64 - 1)) {
                (Some(fp), Some(fm)) => Some((0..m).map(|r| (fp[r] - fm[r]) / h).collect()),
                _ => None,
            }
        } else if pos == 0 {
            // One-sided from samples at +1/2, +3/2, +5/2.
            match (flux_at(0), flux_at(1), flux_at(2)) {
                (Some(f0), Some(f1), Some(f2)) => Some(
                    (0..m)
                        .map(|r| (f0[r] * -2.0 + f1[r] * 3.0 - f2[r]) / h)
                        .collect(),
                ),
                (Some(f0), Some(f1), None) => {
                    Some((0..m).map(|r| (f1[r] - f0[r]) / h).collect())
                }
                _ => None,
            }
        } else {
            let p = pos as i64;
            match (flux_at(p - 1), flux_at(p - 2), flux_at(p - 3)) {
                (Some(f0), Some(f1), Some(f2)) => Some(
                    (0..m)
                        .map(|r| (f0[r] * 2.0 - f1[r] * 3.0 + f2[r]) / h)
                        .collect(),
                ),
                (Some(f0), Some(f1), None) => {
                    Some((0..m).map(|r| (f0[r] - f1[r]) / h).collect())
                }
                _ => None,
            }
        };
        if let Some(d) = deriv {
            for r in 0..m {
                div[r] += d[r];
            }
        }
    }
    // d_A^* alpha = -(1/rho) div(flux) - g^{nu la} A_nu^dagger alpha_la with
    // the node value of alpha extrapolated from the nearest edge samples.
    let rho = metric.density[node];
    let gi = metric.ginv[node];
    let alpha_node = [
        node_value_of_edge_component(grid, &alpha.c1, node, 0),
        node_value_of_edge_component(grid, &alpha.c2, node, 1),
    ];
    let mut out = vec![C64::new(0.0, 0.0); m];
    let a_comp = [&a.a1[node], &a.a2[node]];
    for r in 0..m {
        out[r] = -div[r] / rho;
    }
    for (nu, anu) in a_comp.iter().enumerate() {
        let anu_adj = anu.adj();
        for la in 0..2 {
            let gval = match (nu, la) {
                (0, 0) => gi[0],
                (1, 1) => gi[2],
                _ => gi[1],
            };
            if gval == 0.0 {
                continue;
            }
            for r in 0..m {
                for cc in 0..m {
                    out[r] += anu_adj.at(r, cc) * alpha_node[la][cc] * gval;
                }
            }
        }
    }
    out
}

/// Second-order extrapolation of an edge-sampled component to a node.
fn node_value_of_edge_component(
    grid: &ChartGrid,
    comp: &SectionField,
    node: usize,
    axis: usize,
) -> Vec<C64> {
    let m = comp.m;
    let back = grid.neighbor(node, axis, -1);
    let has_fwd = grid.neighbor(node, axis, 1).is_some();
    match (back, has_fwd) {
        (Some(b), true) => (0..m).map(|r| (comp.v[node][r] + comp.v[b][r]) * 0.5).collect(),
        (None, true) => {
            // 1.5 f(+1/2) - 0.5 f(+3/2)
            let nxt = grid.neighbor(node, axis, 1).unwrap();
            (0..m)
                .map(|r| comp.v[node][r] * 1.5 - comp.v[nxt][r] * 0.5)
                .collect()
        }
        (Some(b), false) => {
            let bb = grid.neighbor(b, axis, -1);
            match bb {
                Some(bb) => (0..m)
                    .map(|r| comp.v[b][r] * 1.5 - comp.v[bb][r] * 0.5)
                    .collect(),
                None => comp.v[b].clone(),
            }
        }
        (None, false) => vec![C64::new(0.0, 0.0); m],
    }
}

/// Accumulates (edge operator)^dagger applied to a weighted edge value into
/// the two endpoint nodes.
fn distribute_adjoint(
    out: &mut SectionField,
    ap: &CMat,
    aq: &CMat,
    p: usize,
    q: usize,
    h: f64,
    beta: &[C64],
) {
    let m = beta.len();
    let abar_adj = ap.add(aq).scale(C64::new(0.5, 0.0)).adj();
    for r in 0..m {
        // L_minus^dagger = -I/h + Abar^dagger / 2 acting on beta -> node p
        // L_plus^dagger  = +I/h + Abar^dagger / 2 acting on beta -> node q
        let mut acc_p = -beta[r] / h;
        let mut acc_q = beta[r] / h;
        for c in 0..m {
            let v = abar_adj.at(r, c) * beta[c] * 0.5;
            acc_p += v;
            acc_q += v;
        }
        out.v[p][r] += acc_p;
        out.v[q][r] += acc_q;
    }
}

// ---------------------------------------------------------------------------
// Yang-Mills residual
// ---------------------------------------------------------------------------

/// D_A^* F_A, the Euler-Lagrange residual of the Yang-Mills energy, as a
/// node-valued one-form field (pair of matrix fields).
///
/// With F = F12 dx1 ^ dx2 the metric codifferential reads
/// (d^*F)_mu = (1/rho) [ g_{mu 1} d2 (F12/rho) - g_{mu 2} d1 (F12/rho) ]
/// and the induced connection adds commutator terms through the metric.
pub fn ym_residual(
    grid: &ChartGrid,
    metric: &MetricField,
    a: &ConnectionField,
) -> (Vec<CMat>, Vec<CMat>) {
    let f = curvature(grid, a);
    let n = grid.num_nodes();
    let scaled: Vec<CMat> = (0..n)
        .map(|i| f.f12[i].scale(C64::new(1.0 / metric.density[i], 0.0)))
        .collect();
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    for i in 0..n {
        let d1 = diff_mat(grid, &scaled, i, 0);
        let d2 = diff_mat(grid, &scaled, i, 1);
        let g = metric.g[i];
        let rho = metric.density[i];
        let base1 = d2.scale(C64::new(g[0] / rho, 0.0)).sub(&d1.scale(C64::new(g[1] / rho, 0.0)));
        let base2 = d2.scale(C64::new(g[1] / rho, 0.0)).sub(&d1.scale(C64::new(g[2] / rho, 0.0)));
        // Commutator part: (D_A^* F)_1 += g^{nu 2} [A_nu, F12],
        //                  (D_A^* F)_2 -= g^{nu 1} [A_nu, F12].
        let gi = metric.ginv[i];
        let c1 = a.a1[i]
            .commutator(&f.f12[i])
            .scale(C64::new(gi[1], 0.0))
            .add(&a.a2[i].commutator(&f.f12[i]).scale(C64::new(gi[2], 0.0)));
        let c2 = a.a1[i]
            .commutator(&f.f12[i])
            .scale(C64::new(gi[0], 0.0))
            .add(&a.a2[i].commutator(&f.f12[i]).scale(C64::new(gi[1], 0.0)));
        r1.push(base1.add(&c1));
        r2.push(base2.sub(&c2));
    }
    (r1, r2)
}

/// Max Frobenius norm of the residual over interior nodes.
pub fn ym_residual_interior_norm(
    grid: &ChartGrid,
    metric: &MetricField,
    a: &ConnectionField,
) -> f64 {
    let (r1, r2) = ym_residual(grid, metric, a);
    grid.interior_nodes()
        .into_iter()
        .map(|i| (r1[i].norm().powi(2) + r2[i].norm().powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// Convenience: is this grid an annulus?
pub fn is_annulus(grid: &ChartGrid) -> bool {
    grid.topology == Topology::Annulus
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GaugeField;
    use crate::grid::{build_grid, Topology};
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> C64 {
        Complex64::new(re, im)
    }

    fn linear_a_field(grid: &ChartGrid) -> ConnectionField {
        // m = 1, A = (0, i x1): constant curvature i.
        let n = grid.num_nodes();
        let mut a = ConnectionField::zero(grid, 1);
        for i in 0..n {
            let (x1, _) = grid.position(i);
            a.a2[i] = CMat::from_rows(&[&[c(0.0, x1)]]);
        }
        a
    }

    #[test]
    fn curvature_of_linear_scalar_connection() {
        let g = build_grid(Topology::Rectangle, 6, 6).unwrap();
        let a = linear_a_field(&g);
        let f = curvature(&g, &a);
        for i in 0..g.num_nodes() {
            assert!((f.f12[i].at(0, 0) - c(0.0, 1.0)).norm() < 1e-13, "F12 = i everywhere");
        }
    }

    #[test]
    fn curvature_of_constant_matrices_is_commutator() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let n1m = CMat::from_rows(&[&[c(0.0, 0.1), c(0.2, 0.0)], &[c(-0.2, 0.0), c(0.0, -0.3)]]);
        let n2m = CMat::from_rows(&[&[c(0.0, -0.2), c(0.0, 0.1)], &[c(0.0, 0.1), c(0.0, 0.4)]]);
        let a = ConnectionField {
            m: 2,
            a1: vec![n1m.clone(); g.num_nodes()],
            a2: vec![n2m.clone(); g.num_nodes()],
            unitary: true,
        };
        let f = curvature(&g, &a);
        let expect = n1m.commutator(&n2m);
        for i in 0..g.num_nodes() {
            assert!(f.f12[i].sub(&expect).norm() < 1e-13);
        }
    }

    #[test]
    fn pure_gauge_curvature_refines_at_second_order() {
        // A = F^-1 dF with F = exp(i (x1 sigma + x2 tau)), sigma and tau
        // non-commuting Hermitian: flat up to O(h^2).
        let sigma = CMat::from_rows(&[&[c(0.4, 0.0), c(0.1, 0.2)], &[c(0.1, -0.2), c(-0.3, 0.0)]]);
        let tau = CMat::from_rows(&[&[c(-0.2, 0.0), c(0.3, 0.0)], &[c(0.3, 0.0), c(0.5, 0.0)]]);
        let mut norms = Vec::new();
        for &n in &[9usize, 17, 33] {
            let g = build_grid(Topology::Rectangle, n, n).unwrap();
            let mut f = GaugeField::identity(&g, 2);
            for i in 0..g.num_nodes() {
                let (x1, x2) = g.position(i);
                let phase = sigma.scale(c(0.0, x1)).add(&tau.scale(c(0.0, x2)));
                f.f[i] = phase.expm();
            }
            let a = gauge_pullback(&g, &f, &ConnectionField::zero(&g, 2)).unwrap();
            let curv = curvature(&g, &a);
            norms.push(curv.sup_norm());
        }
        let slope1 = (norms[0] / norms[1]).log2();
        let slope2 = (norms[1] / norms[2]).log2();
        assert!(slope1 > 1.6 && slope2 > 1.7, "flatness order ~2, got {slope1:.2}, {slope2:.2}");
    }

    #[test]
    fn constant_gauge_pullback_is_conjugation() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let u = CMat::from_rows(&[&[c(0.0, 1.0)]]);
        let f = GaugeField {
            m: 1,
            f: vec![u.clone(); g.num_nodes()],
            unitary: true,
        };
        let a = linear_a_field(&g);
        let b = gauge_pullback(&g, &f, &a).unwrap();
        for i in 0..g.num_nodes() {
            assert!(b.a2[i].sub(&a.a2[i]).norm() < 1e-14, "abelian conjugation is identity");
        }
    }

    #[test]
    fn scalar_exponential_gauge_gives_i_dphi() {
        // F = e^{i phi} with linear phi: A' = i d phi up to the O(h^2)
        // phase-differencing defect (sin(c h)/h vs c).
        let g = build_grid(Topology::Rectangle, 65, 65).unwrap();
        let mut f = GaugeField::identity(&g, 1);
        let phi = |x1: f64, x2: f64| 0.3 * x1 + 0.7 * x2;
        for i in 0..g.num_nodes() {
            let (x1, x2) = g.position(i);
            f.f[i] = CMat::from_rows(&[&[C64::from_polar(1.0, phi(x1, x2))]]);
        }
        let b = gauge_pullback(&g, &f, &ConnectionField::zero(&g, 1)).unwrap();
        for i in 0..g.num_nodes() {
            assert!((b.a1[i].at(0, 0) - c(0.0, 0.3)).norm() < 1e-4, "A1' = i d1 phi");
            assert!((b.a2[i].at(0, 0) - c(0.0, 0.7)).norm() < 1e-4, "A2' = i d2 phi");
        }
    }

    #[test]
    fn gauge_group_action_composes() {
        // (F G)^*(A) = G^*(F^*(A)); the discrete defect is the Leibniz-rule
        // error of centered differences, cubic in field amplitude, so gentle
        // unitary fields on a refined grid sit below 1e-8.
        let g = build_grid(Topology::Rectangle, 129, 129).unwrap();
        let amp = 0.002;
        let make = |shift: f64| {
            let mut f = GaugeField::identity(&g, 2);
            for i in 0..g.num_nodes() {
                let (x1, x2) = g.position(i);
                let s = ((x1 + 0.7 * x2 + shift) * 2.5).sin() * amp;
                let t = ((x2 - 0.4 * x1 + shift) * 2.0).cos() * amp;
                let skew = CMat::from_rows(&[
                    &[c(0.0, s), c(t, 0.5 * amp)],
                    &[c(-t, 0.5 * amp), c(0.0, -s)],
                ]);
                f.f[i] = skew.expm();
            }
            f
        };
        let f = make(0.0);
        let gg = make(1.3);
        let a = ConnectionField::zero(&g, 2);
        let fg = GaugeField {
            m: 2,
            f: (0..g.num_nodes()).map(|i| f.f[i].mul(&gg.f[i])).collect(),
            unitary: true,
        };
        let lhs = gauge_pullback(&g, &fg, &a).unwrap();
        let rhs = gauge_pullback(&g, &gg, &gauge_pullback(&g, &f, &a).unwrap()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.num_nodes() {
            worst = worst.max(lhs.a1[i].sub(&rhs.a1[i]).norm());
            worst = worst.max(lhs.a2[i].sub(&rhs.a2[i]).norm());
        }
        assert!(worst < 1e-8, "group action discrepancy {worst:.3e}");
    }

    #[test]
    fn covariant_derivative_of_constants() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let u = SectionField::constant(&g, &[c(2.0, -1.0)]);
        let a = ConnectionField::zero(&g, 1);
        let d = covariant_derivative(&g, &a, &u);
        assert!(d.c1.sup_norm() < 1e-15 && d.c2.sup_norm() < 1e-15);

        // Constant matrix connection (N, 0): d_A u = (N c, 0).
        let nmat = CMat::from_rows(&[&[c(0.0, 0.5)]]);
        let a2 = ConnectionField {
            m: 1,
            a1: vec![nmat; g.num_nodes()],
            a2: vec![CMat::zeros(1); g.num_nodes()],
            unitary: true,
        };
        let d2 = covariant_derivative(&g, &a2, &u);
        // On every existing forward x-edge the value is N*c.
        for i1 in 0..g.n1 - 1 {
            for i2 in 0..g.n2 {
                let p = g.index(i1, i2);
                let expect = c(0.0, 0.5) * c(2.0, -1.0);
                assert!((d2.c1.v[p][0] - expect).norm() < 1e-14);
            }
        }
        assert!(d2.c2.sup_norm() < 1e-15);
    }

    #[test]
    fn codifferential_of_linear_one_form_is_constant() {
        // alpha = (x1, 0) sampled at edge midpoints, flat metric: d* alpha = -1
        // exactly at every node including boundary and corners.
        let g = build_grid(Topology::Rectangle, 6, 6).unwrap();
        let metric = MetricField::flat(&g);
        let mut alpha = OneFormSection {
            c1: SectionField::zeros(&g, 1),
            c2: SectionField::zeros(&g, 1),
        };
        for i1 in 0..g.n1 - 1 {
            for i2 in 0..g.n2 {
                let p = g.index(i1, i2);
                let (x1, _) = g.position(p);
                alpha.c1.v[p][0] = c(x1 + 0.5 * g.h1, 0.0);
            }
        }
        let a = ConnectionField::zero(&g, 1);
        let out = codifferential(&g, &metric, &a, &alpha);
        for i in 0..g.num_nodes() {
            assert!(
                (out.v[i][0] - c(-1.0, 0.0)).norm() < 1e-12,
                "d* (x1 dx1) = -1 at node {i}, got {:?}",
                out.v[i][0]
            );
        }
    }

    #[test]
    fn codifferential_of_zero_is_zero() {
        let g = build_grid(Topology::Annulus, 5, 8).unwrap();
        let metric = MetricField::flat(&g);
        let a = ConnectionField::zero(&g, 2);
        let alpha = OneFormSection {
            c1: SectionField::zeros(&g, 2),
            c2: SectionField::zeros(&g, 2),
        };
        let out = codifferential(&g, &metric, &a, &alpha);
        assert!(out.sup_norm() == 0.0);
    }

    #[test]
    fn adjointness_is_exact_by_construction() {
        use rand::{Rng, SeedableRng};
        let g = build_grid(Topology::Rectangle, 8, 7).unwrap();
        let samples: Vec<[f64; 3]> = (0..g.num_nodes())
            .map(|i| {
                let (x, y) = g.position(i);
                [1.0 + 0.2 * x, 0.1 * x * y, 1.0 + 0.3 * y]
            })
            .collect();
        let metric = crate::metric::metric_geometry(&g, &samples).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut a = ConnectionField::zero(&g, 2);
        for i in 0..g.num_nodes() {
            let r = || -> f64 { 0.0 };
            let _ = r;
            let x = rng.gen_range(-0.3..0.3);
            let y = rng.gen_range(-0.3..0.3);
            a.a1[i] = CMat::from_rows(&[&[c(0.0, x), c(y, 0.1)], &[c(-y, 0.1), c(0.0, -x)]]);
            a.a2[i] = CMat::from_rows(&[&[c(0.0, y), c(x, -0.2)], &[c(-x, -0.2), c(0.0, x)]]);
        }
        // u with a compactly supported bump; v interior-supported.
        let mut u = SectionField::zeros(&g, 2);
        let mut v = SectionField::zeros(&g, 2);
        for i in 0..g.num_nodes() {
            if g.is_interior(i) {
                u.v[i] = vec![c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)); 2];
                v.v[i] = vec![c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)); 2];
            }
        }
        let alpha = covariant_derivative(&g, &a, &u);
        let lhs_field = codifferential(&g, &metric, &a, &alpha);
        // <d_A^* alpha, v>_mu
        let mut lhs = c(0.0, 0.0);
        for i in 0..g.num_nodes() {
            let mu = node_measure(&g, &metric, i);
            for r in 0..2 {
                lhs += lhs_field.v[i][r].conj() * v.v[i][r] * mu;
            }
        }
        // <alpha, d_A v>_W
        let dv = covariant_derivative(&g, &a, &v);
        let w_alpha = metric_weight_oneform(&g, &metric, &alpha);
        let mut rhs = c(0.0, 0.0);
        for i in 0..g.num_nodes() {
            for r in 0..2 {
                rhs += w_alpha.c1.v[i][r].conj() * dv.c1.v[i][r];
                rhs += w_alpha.c2.v[i][r].conj() * dv.c2.v[i][r];
            }
        }
        assert!(
            (lhs - rhs).norm() < 1e-8 * (1.0 + lhs.norm()),
            "adjointness defect {:.3e}",
            (lhs - rhs).norm()
        );
    }

    #[test]
    fn gauge_compatibility_of_covariant_derivative() {
        // d_{F*A}(F^-1 u) = F^-1 d_A u within discretization error for gentle fields.
        let g = build_grid(Topology::Rectangle, 129, 129).unwrap();
        let mut f = GaugeField::identity(&g, 1);
        let mut u = SectionField::zeros(&g, 1);
        for i in 0..g.num_nodes() {
            let (x1, x2) = g.position(i);
            f.f[i] = CMat::from_rows(&[&[C64::from_polar(1.0, 0.05 * (x1 + x2))]]);
            u.v[i][0] = c((0.8 * x1).sin() * 0.2 + 1.0, (0.7 * x2).cos() * 0.2);
        }
        let a = linear_a_field(&g);
        let ap = gauge_pullback(&g, &f, &a).unwrap();
        let fu = SectionField {
            m: 1,
            v: (0..g.num_nodes())
                .map(|i| vec![f.f[i].inverse().unwrap().at(0, 0) * u.v[i][0]])
                .collect(),
        };
        let lhs = covariant_derivative(&g, &ap, &fu);
        let du = covariant_derivative(&g, &a, &u);
        let mut worst: f64 = 0.0;
        for i1 in 1..g.n1 - 2 {
            for i2 in 1..g.n2 - 2 {
                let p = g.index(i1, i2);
                let q = g.neighbor(p, 0, 1).unwrap();
                // Edge-midpoint gauge value (F at the midpoint, second order).
                let fmid = f.f[p].at(0, 0) + f.f[q].at(0, 0);
                let finv = 2.0 / fmid;
                let expect = finv * du.c1.v[p][0];
                worst = worst.max((lhs.c1.v[p][0] - expect).norm());
            }
        }
        assert!(worst < 1e-8, "gauge compatibility defect {worst:.3e}");
    }

    #[test]
    fn ym_residual_of_constant_curvature_scalar() {
        let g = build_grid(Topology::Rectangle, 8, 8).unwrap();
        let metric = MetricField::flat(&g);
        let a = linear_a_field(&g);
        let norm = ym_residual_interior_norm(&g, &metric, &a);
        assert!(norm < 1e-10, "constant-curvature abelian field is Yang-Mills, residual {norm:.3e}");
    }

    #[test]
    fn ym_residual_of_flat_commuting_connection() {
        let g = build_grid(Topology::Rectangle, 8, 8).unwrap();
        let metric = MetricField::flat(&g);
        let d1 = CMat::from_rows(&[&[c(0.0, 0.3), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, -0.2)]]);
        let d2 = CMat::from_rows(&[&[c(0.0, -0.1), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.5)]]);
        let a = ConnectionField {
            m: 2,
            a1: vec![d1; g.num_nodes()],
            a2: vec![d2; g.num_nodes()],
            unitary: true,
        };
        let norm = ym_residual_interior_norm(&g, &metric, &a);
        assert!(norm < 1e-10, "commuting constant connection is flat, residual {norm:.3e}");
    }
}
