//! Single-chart discretized manifolds with boundary.
//!
//! Two chart topologies are supported: the unit square `[0,1] x [0,1]` and
//! the annulus `[0,1] x S^1` (periodic in the second coordinate, spacing
//! `2*pi/n2`). Nodes are indexed row-major with the second index fastest:
//! `idx = i1 * n2 + i2`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Rectangle,
    Annulus,
}

/// Which part of the boundary a node sits on, with outward direction implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// x1 = 0 edge (inner circle on the annulus), outward is -x1.
    X1Lo,
    /// x1 = 1 edge (outer circle on the annulus), outward is +x1.
    X1Hi,
    /// x2 = 0 edge, outward is -x2 (rectangle only).
    X2Lo,
    /// x2 = 1 edge, outward is +x2 (rectangle only).
    X2Hi,
}

impl Side {
    /// Coordinate axis (0 or 1) normal to this side.
    pub fn axis(self) -> usize {
        match self {
            Side::X1Lo | Side::X1Hi => 0,
            Side::X2Lo | Side::X2Hi => 1,
        }
    }

    /// Sign of the outward coordinate direction.
    pub fn orientation(self) -> f64 {
        match self {
            Side::X1Lo | Side::X2Lo => -1.0,
            Side::X1Hi | Side::X2Hi => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChartGrid {
    pub topology: Topology,
    pub n1: usize,
    pub n2: usize,
    pub h1: f64,
    pub h2: f64,
    /// True when x2 is periodic (annulus).
    pub periodic: bool,
    /// Boundary nodes in counterclockwise order with their outward side.
    pub boundary_nodes: Vec<(usize, Side)>,
}

/// Builds the chart grid for the requested topology.
///
/// Spacings are `h1 = 1/(n1-1)` and `h2 = 1/(n2-1)` on the rectangle;
/// the annulus uses `h2 = 2*pi/n2` with periodic wrap in x2.
pub fn build_grid(topology: Topology, n1: usize, n2: usize) -> Result<ChartGrid> {
    if n1 < 3 || n2 < 3 {
        return Err(Error::GridTooSmall { n1, n2 });
    }
    let h1 = 1.0 / (n1 - 1) as f64;
    let (h2, periodic) = match topology {
        Topology::Rectangle => (1.0 / (n2 - 1) as f64, false),
        Topology::Annulus => (TWO_PI / n2 as f64, true),
    };
    let idx = |i1: usize, i2: usize| i1 * n2 + i2;
    let mut boundary_nodes = Vec::new();
    match topology {
        Topology::Rectangle => {
            // Counterclockwise: bottom, right, top, left. Corners go with the
            // side on which the walk first meets them.
            for i1 in 0..n1 {
                boundary_nodes.push((idx(i1, 0), Side::X2Lo));
            }
            for i2 in 1..n2 {
                boundary_nodes.push((idx(n1 - 1, i2), Side::X1Hi));
            }
            for i1 in (0..n1 - 1).rev() {
                boundary_nodes.push((idx(i1, n2 - 1), Side::X2Hi));
            }
            for i2 in (1..n2 - 1).rev() {
                boundary_nodes.push((idx(0, i2), Side::X1Lo));
            }
        }
        Topology::Annulus => {
            // Outer circle with increasing theta, then inner with decreasing
            // theta, so the whole walk is counterclockwise as seen from M.
            for i2 in 0..n2 {
                boundary_nodes.push((idx(n1 - 1, i2), Side::X1Hi));
            }
            for i2 in (0..n2).rev() {
                boundary_nodes.push((idx(0, i2), Side::X1Lo));
            }
        }
    }
    Ok(ChartGrid {
        topology,
        n1,
        n2,
        h1,
        h2,
        periodic,
        boundary_nodes,
    })
}

impl ChartGrid {
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    #[inline]
    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    /// Chart position of a node.
    pub fn position(&self, idx: usize) -> (f64, f64) {
        let (i1, i2) = self.coords_of(idx);
        (i1 as f64 * self.h1, i2 as f64 * self.h2)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i1, i2) = self.coords_of(idx);
        if i1 == 0 || i1 == self.n1 - 1 {
            return true;
        }
        !self.periodic && (i2 == 0 || i2 == self.n2 - 1)
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        !self.is_boundary(idx)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.is_interior(i)).collect()
    }

    /// Neighbor index along axis (0 = x1, 1 = x2), step +1 or -1.
    /// Returns None when the step leaves the chart.
    pub fn neighbor(&self, idx: usize, axis: usize, step: i64) -> Option<usize> {
        let (i1, i2) = self.coords_of(idx);
        match axis {
            0 => {
                let t = i1 as i64 + step;
                if t < 0 || t >= self.n1 as i64 {
                    None
                } else {
                    Some(self.index(t as usize, i2))
                }
            }
            1 => {
                let t = i2 as i64 + step;
                if self.periodic {
                    let n2 = self.n2 as i64;
                    Some(self.index(i1, (t.rem_euclid(n2)) as usize))
                } else if t < 0 || t >= self.n2 as i64 {
                    None
                } else {
                    Some(self.index(i1, t as usize))
                }
            }
            _ => None,
        }
    }

    /// Side of a boundary node.
    pub fn side_of(&self, idx: usize) -> Option<Side> {
        self.boundary_nodes
            .iter()
            .find(|(b, _)| *b == idx)
            .map(|(_, s)| *s)
    }

    /// True when the chart point is inside the closed chart.
    pub fn contains_point(&self, x1: f64, x2: f64) -> bool {
        let eps = 1e-12;
        if !(-eps..=1.0 + eps).contains(&x1) {
            return false;
        }
        if self.periodic {
            true
        } else {
            (-eps..=1.0 + eps).contains(&x2)
        }
    }

    /// Extent of the x2 coordinate (1 for the rectangle, 2*pi for the annulus).
    pub fn x2_extent(&self) -> f64 {
        if self.periodic {
            TWO_PI
        } else {
            1.0
        }
    }
}

/// Mask over the boundary nodes selecting the measurement set.
#[derive(Debug, Clone)]
pub struct BoundaryRegion {
    /// One flag per entry of `grid.boundary_nodes`, in the same order.
    pub mask: Vec<bool>,
}

impl BoundaryRegion {
    pub fn full(grid: &ChartGrid) -> Self {
        BoundaryRegion {
            mask: vec![true; grid.boundary_nodes.len()],
        }
    }

    pub fn from_predicate<F: Fn(usize, Side) -> bool>(grid: &ChartGrid, pred: F) -> Self {
        BoundaryRegion {
            mask: grid
                .boundary_nodes
                .iter()
                .map(|&(idx, side)| pred(idx, side))
                .collect(),
        }
    }

    /// One whole side of the boundary.
    pub fn side(grid: &ChartGrid, side: Side) -> Self {
        Self::from_predicate(grid, |_, s| s == side)
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn selected_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Node indices selected by the mask, in boundary order.
    pub fn nodes(&self, grid: &ChartGrid) -> Vec<usize> {
        grid.boundary_nodes
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&(idx, _), _)| idx)
            .collect()
    }

    /// Number of connected runs of selected nodes along the boundary walk.
    pub fn component_count(&self) -> usize {
        let n = self.mask.len();
        if n == 0 {
            return 0;
        }
        let mut count = 0;
        for i in 0..n {
            let prev = self.mask[(i + n - 1) % n];
            if self.mask[i] && !prev {
                count += 1;
            }
        }
        if count == 0 && self.mask[0] {
            1 // fully selected circle
        } else {
            count
        }
    }
}

/// Sampled curve in the chart, parameter increasing with the point list.
#[derive(Debug, Clone)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
    pub params: Vec<f64>,
    pub closed: bool,
    /// Nearest boundary node of the first point, when it lies on the boundary.
    pub anchor: Option<usize>,
}

impl Curve {
    /// Winding number in x2 (meaningful on the annulus).
    pub fn winding(&self, grid: &ChartGrid) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        (self.points.last().unwrap().1 - self.points[0].1) / grid.x2_extent()
    }

    pub fn reversed(&self) -> Curve {
        let mut points = self.points.clone();
        points.reverse();
        let n = self.params.len();
        let total = self.params[n - 1];
        let params = self.params.iter().rev().map(|&t| total - t).collect();
        Curve {
            points,
            params,
            closed: self.closed,
            anchor: None,
        }
    }
}

/// Piecewise-linear resampling through the waypoints with a uniform parameter.
///
/// `samples_per_segment` subintervals are inserted on every leg, so the
/// result has `1 + legs * samples_per_segment` points. The curve is closed
/// when the first and last waypoints coincide (modulo the period in x2).
pub fn trace_curve(
    grid: &ChartGrid,
    waypoints: &[(f64, f64)],
    samples_per_segment: usize,
) -> Result<Curve> {
    assert!(waypoints.len() >= 2, "need at least two waypoints");
    assert!(samples_per_segment >= 1, "need at least one sample per segment");
    for &(x, y) in waypoints {
        if !grid.contains_point(x, y) {
            return Err(Error::WaypointOutsideChart { x, y });
        }
    }
    let mut points = Vec::new();
    points.push(waypoints[0]);
    for seg in waypoints.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        for k in 1..=samples_per_segment {
            let t = k as f64 / samples_per_segment as f64;
            points.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    let n = points.len();
    let params: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let first = waypoints[0];
    let last = *waypoints.last().unwrap();
    let dx2 = if grid.periodic {
        (first.1 - last.1).rem_euclid(TWO_PI).min((last.1 - first.1).rem_euclid(TWO_PI))
    } else {
        (first.1 - last.1).abs()
    };
    let closed = (first.0 - last.0).abs() < 1e-12 && dx2 < 1e-12;
    let anchor = nearest_boundary_node(grid, first);
    Ok(Curve {
        points,
        params,
        closed,
        anchor,
    })
}

fn nearest_boundary_node(grid: &ChartGrid, p: (f64, f64)) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &(idx, _) in &grid.boundary_nodes {
        let (x, y) = grid.position(idx);
        let dy = if grid.periodic {
            let d = (p.1 - y).rem_euclid(TWO_PI);
            d.min(TWO_PI - d)
        } else {
            p.1 - y
        };
        let d2 = (p.0 - x).powi(2) + dy * dy;
        if best.map_or(true, |(bd, _)| d2 < bd) {
            best = Some((d2, idx));
        }
    }
    let tol = 0.51 * grid.h1.min(grid.h2);
    best.and_then(|(d2, idx)| if d2.sqrt() <= tol { Some(idx) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_boundary_count() {
        let g = build_grid(Topology::Rectangle, 4, 4).unwrap();
        assert_eq!(g.num_nodes(), 16);
        assert_eq!(g.boundary_nodes.len(), 12, "2(4+4)-4 boundary nodes");
    }

    #[test]
    fn annulus_boundary_count() {
        let g = build_grid(Topology::Annulus, 4, 8).unwrap();
        assert_eq!(g.num_nodes(), 32);
        assert_eq!(g.boundary_nodes.len(), 16, "two circles of 8");
    }

    #[test]
    fn too_small_grid_rejected() {
        assert!(matches!(
            build_grid(Topology::Rectangle, 2, 5),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn boundary_count_formulas_across_sizes() {
        for &(n1, n2) in &[(3usize, 3usize), (5, 9), (16, 7), (33, 33), (128, 3), (3, 128)] {
            let g = build_grid(Topology::Rectangle, n1, n2).unwrap();
            assert_eq!(g.boundary_nodes.len(), 2 * (n1 + n2) - 4);
            let a = build_grid(Topology::Annulus, n1, n2).unwrap();
            assert_eq!(a.boundary_nodes.len(), 2 * n2);
        }
    }

    #[test]
    fn interior_nodes_have_full_stencils() {
        for topo in [Topology::Rectangle, Topology::Annulus] {
            let g = build_grid(topo, 5, 6).unwrap();
            for idx in g.interior_nodes() {
                for axis in 0..2 {
                    for step in [-1i64, 1] {
                        assert!(
                            g.neighbor(idx, axis, step).is_some(),
                            "interior node {idx} missing neighbor"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn refinement_nesting() {
        let coarse = build_grid(Topology::Rectangle, 9, 5).unwrap();
        let fine = build_grid(Topology::Rectangle, 17, 5).unwrap();
        for idx in 0..coarse.num_nodes() {
            let (x, y) = coarse.position(idx);
            let hit = (0..fine.num_nodes()).any(|j| {
                let (fx, fy) = fine.position(j);
                (fx - x).abs() < 1e-12 && (fy - y).abs() < 1e-12
            });
            assert!(hit, "coarse node ({x}, {y}) not in the refinement");
        }
    }

    #[test]
    fn diagonal_trace_has_expected_points() {
        let g = build_grid(Topology::Rectangle, 8, 8).unwrap();
        let c = trace_curve(&g, &[(0.0, 0.0), (1.0, 1.0)], 10).unwrap();
        assert_eq!(c.points.len(), 11);
        assert!(!c.closed);
        assert_eq!(c.anchor, Some(0));
    }

    #[test]
    fn annulus_loop_is_closed_with_winding_one() {
        let g = build_grid(Topology::Annulus, 8, 16).unwrap();
        let c = trace_curve(&g, &[(0.5, 0.0), (0.5, TWO_PI)], 64).unwrap();
        assert!(c.closed, "loop endpoints match modulo the period");
        assert!((c.winding(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waypoint_outside_chart_rejected() {
        let g = build_grid(Topology::Rectangle, 8, 8).unwrap();
        assert!(matches!(
            trace_curve(&g, &[(0.0, 0.0), (2.0, 0.0)], 4),
            Err(Error::WaypointOutsideChart { .. })
        ));
    }

    #[test]
    fn gamma_component_count() {
        let g = build_grid(Topology::Rectangle, 6, 6).unwrap();
        let full = BoundaryRegion::full(&g);
        assert_eq!(full.component_count(), 1);
        let bottom = BoundaryRegion::side(&g, Side::X2Lo);
        assert_eq!(bottom.component_count(), 1);
        assert_eq!(bottom.selected_count(), 6);
        let two = BoundaryRegion::from_predicate(&g, |_, s| s == Side::X2Lo || s == Side::X2Hi);
        assert_eq!(two.component_count(), 2);
    }
}
