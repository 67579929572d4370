//! Parallel transport along curves and the temporal (normal) gauge.

use crate::cmat::{C64, CMat};
use crate::error::{Error, Result};
use crate::fields::{ConnectionField, GaugeField, TransportMatrix};
use crate::grid::{ChartGrid, Curve, Side, TWO_PI};

/// Bilinear interpolation of a matrix field at a chart point.
pub fn interp_mat(grid: &ChartGrid, field: &[CMat], x1: f64, x2: f64) -> CMat {
    let m = field[0].m;
    let f1 = (x1 / grid.h1).clamp(0.0, (grid.n1 - 1) as f64);
    let i1 = (f1.floor() as usize).min(grid.n1 - 2);
    let t1 = f1 - i1 as f64;
    let (i2, t2) = if grid.periodic {
        let f2 = (x2 / grid.h2).rem_euclid(grid.n2 as f64);
        let i2 = (f2.floor() as usize).min(grid.n2 - 1);
        (i2, f2 - i2 as f64)
    } else {
        let f2 = (x2 / grid.h2).clamp(0.0, (grid.n2 - 1) as f64);
        let i2 = (f2.floor() as usize).min(grid.n2 - 2);
        (i2, f2 - i2 as f64)
    };
    let j2 = if grid.periodic {
        (i2 + 1) % grid.n2
    } else {
        i2 + 1
    };
    let p00 = &field[grid.index(i1, i2)];
    let p10 = &field[grid.index(i1 + 1, i2)];
    let p01 = &field[grid.index(i1, j2)];
    let p11 = &field[grid.index(i1 + 1, j2)];
    let mut out = CMat::zeros(m);
    let w = [
        (1.0 - t1) * (1.0 - t2),
        t1 * (1.0 - t2),
        (1.0 - t1) * t2,
        t1 * t2,
    ];
    for (mat, wi) in [p00, p10, p01, p11].into_iter().zip(w) {
        if wi != 0.0 {
            out = out.add(&mat.scale(C64::new(wi, 0.0)));
        }
    }
    out
}

/// Solves dP/dt + A(gamma'(t)) P = 0, P(0) = Id, by RK4 over the curve
/// parameter with bilinear sampling of the connection.
pub fn parallel_transport(grid: &ChartGrid, a: &ConnectionField, curve: &Curve) -> TransportMatrix {
    let m = a.m;
    let mut p = CMat::eye(m);
    let gen_at = |x1: f64, x2: f64, v1: f64, v2: f64| -> CMat {
        let a1 = interp_mat(grid, &a.a1, x1, x2);
        let a2 = interp_mat(grid, &a.a2, x1, x2);
        a1.scale(C64::new(-v1, 0.0)).add(&a2.scale(C64::new(-v2, 0.0)))
    };
    for k in 0..curve.points.len() - 1 {
        let (x0, y0) = curve.points[k];
        let (x1, y1) = curve.points[k + 1];
        let dt = curve.params[k + 1] - curve.params[k];
        if dt == 0.0 {
            continue;
        }
        let v1 = (x1 - x0) / dt;
        let v2 = (y1 - y0) / dt;
        let mid = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let g0 = gen_at(x0, y0, v1, v2);
        let gm = gen_at(mid.0, mid.1, v1, v2);
        let g1 = gen_at(x1, y1, v1, v2);
        // Classical RK4 for the linear matrix ODE P' = G(t) P.
        let k1 = g0.mul(&p);
        let k2 = gm.mul(&p.add(&k1.scale(C64::new(dt / 2.0, 0.0))));
        let k3 = gm.mul(&p.add(&k2.scale(C64::new(dt / 2.0, 0.0))));
        let k4 = g1.mul(&p.add(&k3.scale(C64::new(dt, 0.0))));
        let incr = k1
            .add(&k2.scale(C64::new(2.0, 0.0)))
            .add(&k3.scale(C64::new(2.0, 0.0)))
            .add(&k4)
            .scale(C64::new(dt / 6.0, 0.0));
        p = p.add(&incr);
    }
    TransportMatrix {
        p,
        start: curve.points[0],
        end: *curve.points.last().unwrap(),
    }
}

/// Ordered product of transports along consecutive curve segments:
/// P(gamma_1 . gamma_2) = P(gamma_2) * P(gamma_1).
pub fn compose_transports(parts: &[TransportMatrix]) -> Result<TransportMatrix> {
    assert!(!parts.is_empty(), "need at least one transport");
    let tol = 1e-9;
    for (k, w) in parts.windows(2).enumerate() {
        let (ax, ay) = w[0].end;
        let (bx, by) = w[1].start;
        let dy = (ay - by).abs();
        let dy = dy.min((dy - TWO_PI).abs());
        if (ax - bx).abs() > tol || dy > tol {
            return Err(Error::AnchorMismatch { segment: k + 1 });
        }
    }
    let mut p = parts[0].p.clone();
    for part in &parts[1..] {
        p = part.p.mul(&p);
    }
    Ok(TransportMatrix {
        p,
        start: parts[0].start,
        end: parts.last().unwrap().end,
    })
}

/// Quintic ramp: 1 at s <= 0, 0 at s >= 1, C^2 transition.
pub fn quintic_ramp_down(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Temporal gauge: integrates the parallel transport equation inward along
/// normal grid lines so that the pulled-back connection has (nearly) zero
/// normal component within the collar. The generator is ramped off over the
/// last collar cell, and past the collar the gauge returns to the identity
/// along the unitary geodesic exp(s log P), so F = Id at the opposite
/// boundary as well.
///
/// On the rectangle the generator is additionally tapered tangentially over
/// the `depth` cells nearest each corner, where the two collars meet and no
/// single normal direction exists.
pub fn temporal_gauge(grid: &ChartGrid, a: &ConnectionField, depth: usize) -> Result<GaugeField> {
    let max_depth = grid.n1.min(grid.n2) / 2;
    if depth > max_depth {
        return Err(Error::CollarTooDeep {
            depth,
            max: max_depth,
        });
    }
    let m = a.m;
    let mut f = GaugeField::identity(grid, m);
    let substeps = 8usize;

    let integrate_side = |side: Side, f: &mut GaugeField| {
        let axis = side.axis();
        let span = if axis == 0 { grid.n1 } else { grid.n2 };
        let ramp_len = depth.min(((span - 1) / 2).saturating_sub(depth).max(1));
        let inward = -side.orientation();
        let h = if axis == 0 { grid.h1 } else { grid.h2 };
        let comp = if axis == 0 { &a.a1 } else { &a.a2 };
        for &(bnode, bside) in &grid.boundary_nodes {
            if bside != side {
                continue;
            }
            // Tangential taper near rectangle corners.
            let (i1, i2) = grid.coords_of(bnode);
            let taper = if grid.topology == crate::grid::Topology::Rectangle {
                let (tan_idx, tan_n) = if axis == 0 { (i2, grid.n2) } else { (i1, grid.n1) };
                let dist = tan_idx.min(tan_n - 1 - tan_idx);
                if dist >= depth {
                    1.0
                } else {
                    1.0 - quintic_ramp_down(dist as f64 / depth as f64)
                }
            } else {
                1.0
            };
            // Nodes along the inward line, far enough for collar plus blend.
            let mut line = vec![bnode];
            let mut cur = bnode;
            while let Some(next) = grid.neighbor(cur, axis, inward as i64) {
                line.push(next);
                cur = next;
                if line.len() > depth + ramp_len {
                    break;
                }
            }
            let collar_end = depth.min(line.len() - 1);
            let sample = |t: f64| -> CMat {
                // Linear interpolation of the normal component along the line.
                let s = (t / h).clamp(0.0, (line.len() - 1) as f64);
                let k = (s.floor() as usize).min(line.len() - 2);
                let frac = s - k as f64;
                let v = comp[line[k]]
                    .scale(C64::new(1.0 - frac, 0.0))
                    .add(&comp[line[k + 1]].scale(C64::new(frac, 0.0)));
                let sigma = quintic_ramp_down((t / h - (depth as f64 - 1.0)).max(0.0));
                v.scale(C64::new(-inward * sigma * taper, 0.0))
            };
            // RK4 through the collar; record F at each node.
            let mut p = CMat::eye(m);
            let dt = h / substeps as f64;
            for seg in 0..collar_end {
                for s in 0..substeps {
                    let t0 = seg as f64 * h + s as f64 * dt;
                    let g0 = sample(t0);
                    let gm = sample(t0 + dt / 2.0);
                    let g1 = sample(t0 + dt);
                    let k1 = g0.mul(&p);
                    let k2 = gm.mul(&p.add(&k1.scale(C64::new(dt / 2.0, 0.0))));
                    let k3 = gm.mul(&p.add(&k2.scale(C64::new(dt / 2.0, 0.0))));
                    let k4 = g1.mul(&p.add(&k3.scale(C64::new(dt, 0.0))));
                    let incr = k1
                        .add(&k2.scale(C64::new(2.0, 0.0)))
                        .add(&k3.scale(C64::new(2.0, 0.0)))
                        .add(&k4)
                        .scale(C64::new(dt / 6.0, 0.0));
                    p = p.add(&incr);
                }
                f.f[line[seg + 1]] = f.f[line[seg + 1]].mul(&p);
            }
            // Geodesic blend back to the identity beyond the collar.
            if p.sub(&CMat::eye(m)).norm() > 1e-15 {
                let k_gen = p.logm_unitary();
                for j in 1..=ramp_len {
                    let idx = collar_end + j;
                    if idx >= line.len() {
                        break;
                    }
                    let s = quintic_ramp_down(j as f64 / ramp_len as f64);
                    if s == 0.0 {
                        continue;
                    }
                    let fj = k_gen.scale(C64::new(s, 0.0)).expm();
                    f.f[line[idx]] = f.f[line[idx]].mul(&fj);
                }
            }
        }
    };

    match grid.topology {
        crate::grid::Topology::Annulus => {
            integrate_side(Side::X1Lo, &mut f);
            integrate_side(Side::X1Hi, &mut f);
        }
        crate::grid::Topology::Rectangle => {
            integrate_side(Side::X1Lo, &mut f);
            integrate_side(Side::X1Hi, &mut f);
            integrate_side(Side::X2Lo, &mut f);
            integrate_side(Side::X2Hi, &mut f);
        }
    }
    f.unitary = a.unitary;
    Ok(f)
}
