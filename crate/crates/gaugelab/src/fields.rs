//! Matrix-valued fields on the trivial bundle over a chart grid.
//!
//! A connection is the pair of component matrices (A1, A2) of A = A_i dx^i,
//! one pair per node. Unitary connections have skew-Hermitian components.

use crate::cmat::{C64, CMat};
use crate::grid::ChartGrid;

/// Connection A = A_1 dx^1 + A_2 dx^2 with per-node m x m components.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    pub m: usize,
    pub a1: Vec<CMat>,
    pub a2: Vec<CMat>,
    pub unitary: bool,
}

impl ConnectionField {
    pub fn zero(grid: &ChartGrid, m: usize) -> Self {
        let z = vec![CMat::zeros(m); grid.num_nodes()];
        ConnectionField {
            m,
            a1: z.clone(),
            a2: z,
            unitary: true,
        }
    }

    pub fn component(&self, axis: usize, node: usize) -> &CMat {
        if axis == 0 {
            &self.a1[node]
        } else {
            &self.a2[node]
        }
    }

    /// Worst skew-Hermitian defect over nodes and components, relative form.
    pub fn skew_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for mats in [&self.a1, &self.a2] {
            for a in mats.iter() {
                let d = a.add(&a.adj()).norm();
                let scale = a.norm();
                worst = worst.max(d / (scale + 1e-14));
            }
        }
        worst
    }

    /// Asserts the unitary invariant when the flag is set.
    pub fn check_unitary_flag(&self) -> bool {
        if !self.unitary {
            return true;
        }
        for mats in [&self.a1, &self.a2] {
            for a in mats.iter() {
                if a.add(&a.adj()).norm() > 1e-12 * a.norm() + 1e-14 {
                    return false;
                }
            }
        }
        true
    }

    pub fn sup_norm(&self) -> f64 {
        self.a1
            .iter()
            .chain(self.a2.iter())
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }
}

/// Zeroth-order potential Q, one m x m matrix per node.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub m: usize,
    pub q: Vec<CMat>,
    pub hermitian: bool,
}

impl PotentialField {
    pub fn zero(grid: &ChartGrid, m: usize) -> Self {
        PotentialField {
            m,
            q: vec![CMat::zeros(m); grid.num_nodes()],
            hermitian: true,
        }
    }

    pub fn check_hermitian_flag(&self) -> bool {
        if !self.hermitian {
            return true;
        }
        self.q
            .iter()
            .all(|q| q.sub(&q.adj()).norm() <= 1e-12 * q.norm() + 1e-14)
    }
}

/// Bundle automorphism candidate F, one m x m matrix per node.
#[derive(Debug, Clone)]
pub struct GaugeField {
    pub m: usize,
    pub f: Vec<CMat>,
    pub unitary: bool,
}

impl GaugeField {
    pub fn identity(grid: &ChartGrid, m: usize) -> Self {
        GaugeField {
            m,
            f: vec![CMat::eye(m); grid.num_nodes()],
            unitary: true,
        }
    }

    /// min over nodes of |det F|, recomputed on demand.
    pub fn invertibility_margin(&self) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (i, f) in self.f.iter().enumerate() {
            let d = f.det().norm();
            if d < best {
                best = d;
                arg = i;
            }
        }
        (best, arg)
    }

    pub fn unitary_defect(&self) -> f64 {
        self.f
            .iter()
            .map(|f| f.unitary_defect())
            .fold(0.0, f64::max)
    }
}

/// Curvature two-form coefficient F12 of dx^1 wedge dx^2.
#[derive(Debug, Clone)]
pub struct TwoFormField {
    pub m: usize,
    pub f12: Vec<CMat>,
}

impl TwoFormField {
    pub fn sup_norm(&self) -> f64 {
        self.f12.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

/// Section of the bundle: a length-m complex vector per node.
#[derive(Debug, Clone)]
pub struct SectionField {
    pub m: usize,
    pub v: Vec<Vec<C64>>,
}

impl SectionField {
    pub fn zeros(grid: &ChartGrid, m: usize) -> Self {
        SectionField {
            m,
            v: vec![vec![C64::new(0.0, 0.0); m]; grid.num_nodes()],
        }
    }

    pub fn constant(grid: &ChartGrid, value: &[C64]) -> Self {
        SectionField {
            m: value.len(),
            v: vec![value.to_vec(); grid.num_nodes()],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.v
            .iter()
            .map(|x| x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, o: &SectionField) -> SectionField {
        SectionField {
            m: self.m,
            v: self
                .v
                .iter()
                .zip(&o.v)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

/// One-form section: components (alpha_1, alpha_2), each a section field.
#[derive(Debug, Clone)]
pub struct OneFormSection {
    pub c1: SectionField,
    pub c2: SectionField,
}

/// Result of parallel transport along a curve.
#[derive(Debug, Clone)]
pub struct TransportMatrix {
    pub p: CMat,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl TransportMatrix {
    pub fn unitary_defect(&self) -> f64 {
        self.p.unitary_defect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Topology};

    #[test]
    fn zero_connection_is_unitary() {
        let g = build_grid(Topology::Rectangle, 4, 4).unwrap();
        let a = ConnectionField::zero(&g, 2);
        assert!(a.check_unitary_flag());
        assert_eq!(a.skew_defect(), 0.0);
    }

    #[test]
    fn identity_gauge_margin() {
        let g = build_grid(Topology::Rectangle, 4, 4).unwrap();
        let f = GaugeField::identity(&g, 3);
        let (margin, _) = f.invertibility_margin();
        assert!((margin - 1.0).abs() < 1e-14);
        assert_eq!(f.unitary_defect(), 0.0);
    }
}
