//! Sampled Riemannian metrics on a chart grid.
//!
//! A metric is stored as the per-node symmetric matrix (g11, g12, g22)
//! together with cached inverse components and the area density sqrt(det g).
//! Presets: "flat", "diag(a,b)" and "conformal:expr" where expr is a scalar
//! expression in x1, x2 built from +, -, *, /, sin, cos, exp and constants.

use crate::error::{Error, Result};
use crate::grid::ChartGrid;

#[derive(Debug, Clone)]
pub struct MetricField {
    /// (g11, g12, g22) per node.
    pub g: Vec<[f64; 3]>,
    /// (g^11, g^12, g^22) per node.
    pub ginv: Vec<[f64; 3]>,
    /// sqrt(det g) per node.
    pub density: Vec<f64>,
}

/// Builds the metric caches, rejecting non-SPD samples.
pub fn metric_geometry(grid: &ChartGrid, samples: &[[f64; 3]]) -> Result<MetricField> {
    assert_eq!(samples.len(), grid.num_nodes(), "one sample per node");
    let mut ginv = Vec::with_capacity(samples.len());
    let mut density = Vec::with_capacity(samples.len());
    for (node, s) in samples.iter().enumerate() {
        let det = s[0] * s[2] - s[1] * s[1];
        if s[0] <= 0.0 || det <= 0.0 {
            return Err(Error::NonSpdMetric { node });
        }
        ginv.push([s[2] / det, -s[1] / det, s[0] / det]);
        density.push(det.sqrt());
    }
    Ok(MetricField {
        g: samples.to_vec(),
        ginv,
        density,
    })
}

impl MetricField {
    pub fn flat(grid: &ChartGrid) -> MetricField {
        metric_geometry(grid, &vec![[1.0, 0.0, 1.0]; grid.num_nodes()]).unwrap()
    }

    /// Max over nodes of || g * g^-1 - I ||, a cache-consistency measure.
    pub fn cache_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (g, gi) in self.g.iter().zip(&self.ginv) {
            let p = [
                g[0] * gi[0] + g[1] * gi[1] - 1.0,
                g[0] * gi[1] + g[1] * gi[2],
                g[1] * gi[0] + g[2] * gi[1],
                g[1] * gi[1] + g[2] * gi[2] - 1.0,
            ];
            let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(n);
        }
        worst
    }

    /// True when g12 vanishes identically (within roundoff).
    pub fn is_diagonal(&self) -> bool {
        self.g.iter().all(|s| s[1].abs() < 1e-14)
    }

    /// Checks boundary normal form in a collar of the given cell depth:
    /// unit length and no shear in the coordinate transverse to each side.
    pub fn collar_normal_form_defect(&self, grid: &ChartGrid, cells: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |node: usize, axis: usize| {
            let s = self.g[node];
            let diag = if axis == 0 { s[0] } else { s[2] };
            worst = worst.max((diag - 1.0).abs()).max(s[1].abs());
        };
        for &(bnode, side) in &grid.boundary_nodes {
            let axis = side.axis();
            let inward = -side.orientation() as i64;
            let mut cur = bnode;
            check(cur, axis);
            for _ in 0..cells {
                match grid.neighbor(cur, axis, inward) {
                    Some(next) => {
                        cur = next;
                        check(cur, axis);
                    }
                    None => break,
                }
            }
        }
        worst
    }
}

/// Outward g-unit conormal at a boundary node, as a covector.
///
/// The sides are coordinate lines, so the conormal is the outward coordinate
/// covector scaled to unit g-length: nu = sign * e_k / sqrt(g^kk).
pub fn boundary_normal(grid: &ChartGrid, metric: &MetricField, node: usize) -> Result<[f64; 2]> {
    let side = grid
        .side_of(node)
        .ok_or(Error::InteriorNode { node })?;
    let gi = metric.ginv[node];
    let (axis, sign) = (side.axis(), side.orientation());
    let gkk = if axis == 0 { gi[0] } else { gi[2] };
    let scale = sign / gkk.sqrt();
    Ok(match axis {
        0 => [scale, 0.0],
        _ => [0.0, scale],
    })
}

/// Squared g-length of a covector at a node: g^{ij} nu_i nu_j.
pub fn conorm_sq(metric: &MetricField, node: usize, nu: [f64; 2]) -> f64 {
    let gi = metric.ginv[node];
    gi[0] * nu[0] * nu[0] + 2.0 * gi[1] * nu[0] * nu[1] + gi[2] * nu[1] * nu[1]
}

/// Outward unit normal VECTOR components nu^i = g^{ij} nu_j.
pub fn normal_vector(metric: &MetricField, node: usize, nu: [f64; 2]) -> [f64; 2] {
    let gi = metric.ginv[node];
    [
        gi[0] * nu[0] + gi[1] * nu[1],
        gi[1] * nu[0] + gi[2] * nu[1],
    ]
}

pub fn metric_preset(grid: &ChartGrid, name: &str) -> Result<MetricField> {
    let name = name.trim();
    if name == "flat" {
        return Ok(MetricField::flat(grid));
    }
    if let Some(rest) = name.strip_prefix("diag(") {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::UnknownPreset(name.into()))?;
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::UnknownPreset(name.into()));
        }
        let a: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::UnknownPreset(name.into()))?;
        let b: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::UnknownPreset(name.into()))?;
        return metric_geometry(grid, &vec![[a, 0.0, b]; grid.num_nodes()]);
    }
    if let Some(expr) = name.strip_prefix("conformal:") {
        let ast = parse_expr(expr).map_err(Error::Config)?;
        let samples: Vec<[f64; 3]> = (0..grid.num_nodes())
            .map(|i| {
                let (x1, x2) = grid.position(i);
                let c = ast.eval(x1, x2);
                [c, 0.0, c]
            })
            .collect();
        return metric_geometry(grid, &samples);
    }
    Err(Error::UnknownPreset(name.into()))
}

// ---------------------------------------------------------------------------
// Tiny expression grammar for conformal factors.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(0) => x1,
            Expr::Var(_) => x2,
            Expr::Add(a, b) => a.eval(x1, x2) + b.eval(x1, x2),
            Expr::Sub(a, b) => a.eval(x1, x2) - b.eval(x1, x2),
            Expr::Mul(a, b) => a.eval(x1, x2) * b.eval(x1, x2),
            Expr::Div(a, b) => a.eval(x1, x2) / b.eval(x1, x2),
            Expr::Neg(a) => -a.eval(x1, x2),
            Expr::Sin(a) => a.eval(x1, x2).sin(),
            Expr::Cos(a) => a.eval(x1, x2).cos(),
            Expr::Exp(a) => a.eval(x1, x2).exp(),
        }
    }
}

/// Recursive-descent parser for the fixed grammar.
pub fn parse_expr(src: &str) -> std::result::Result<Expr, String> {
    let tokens = tokenize(src)?;
    let mut pos = 0;
    let e = parse_sum(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("unexpected trailing tokens in '{src}'"));
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> std::result::Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Tok::Num(s.parse().map_err(|_| format!("bad number '{s}'"))?));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            _ => return Err(format!("unexpected character '{c}'")),
        }
    }
    Ok(out)
}

fn parse_sum(toks: &[Tok], pos: &mut usize) -> std::result::Result<Expr, String> {
    let mut lhs = parse_product(toks, pos)?;
    while *pos < toks.len() {
        match toks[*pos] {
            Tok::Plus => {
                *pos += 1;
                lhs = Expr::Add(Box::new(lhs), Box::new(parse_product(toks, pos)?));
            }
            Tok::Minus => {
                *pos += 1;
                lhs = Expr::Sub(Box::new(lhs), Box::new(parse_product(toks, pos)?));
            }
            _ => break,
        }
    }
    Ok(lhs)
}

fn parse_product(toks: &[Tok], pos: &mut usize) -> std::result::Result<Expr, String> {
    let mut lhs = parse_atom(toks, pos)?;
    while *pos < toks.len() {
        match toks[*pos] {
            Tok::Star => {
                *pos += 1;
                lhs = Expr::Mul(Box::new(lhs), Box::new(parse_atom(toks, pos)?));
            }
            Tok::Slash => {
                *pos += 1;
                lhs = Expr::Div(Box::new(lhs), Box::new(parse_atom(toks, pos)?));
            }
            _ => break,
        }
    }
    Ok(lhs)
}

fn parse_atom(toks: &[Tok], pos: &mut usize) -> std::result::Result<Expr, String> {
    if *pos >= toks.len() {
        return Err("unexpected end of expression".into());
    }
    let t = toks[*pos].clone();
    *pos += 1;
    match t {
        Tok::Num(v) => Ok(Expr::Const(v)),
        Tok::Minus => Ok(Expr::Neg(Box::new(parse_atom(toks, pos)?))),
        Tok::LParen => {
            let e = parse_sum(toks, pos)?;
            if *pos >= toks.len() || toks[*pos] != Tok::RParen {
                return Err("missing closing parenthesis".into());
            }
            *pos += 1;
            Ok(e)
        }
        Tok::Ident(name) => match name.as_str() {
            "x1" => Ok(Expr::Var(0)),
            "x2" => Ok(Expr::Var(1)),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "sin" | "cos" | "exp" => {
                if *pos >= toks.len() || toks[*pos] != Tok::LParen {
                    return Err(format!("{name} needs parentheses"));
                }
                *pos += 1;
                let arg = parse_sum(toks, pos)?;
                if *pos >= toks.len() || toks[*pos] != Tok::RParen {
                    return Err("missing closing parenthesis".into());
                }
                *pos += 1;
                Ok(match name.as_str() {
                    "sin" => Expr::Sin(Box::new(arg)),
                    "cos" => Expr::Cos(Box::new(arg)),
                    _ => Expr::Exp(Box::new(arg)),
                })
            }
            other => Err(format!("unknown identifier '{other}'")),
        },
        other => Err(format!("unexpected token {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Topology};

    #[test]
    fn identity_metric_caches() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let m = MetricField::flat(&g);
        assert_eq!(m.ginv[7], [1.0, 0.0, 1.0]);
        assert_eq!(m.density[7], 1.0);
        assert!(m.cache_defect() < 1e-12);
    }

    #[test]
    fn diag_metric_caches() {
        let g = build_grid(Topology::Rectangle, 4, 4).unwrap();
        let m = metric_preset(&g, "diag(4, 1)").unwrap();
        assert_eq!(m.ginv[0], [0.25, 0.0, 1.0]);
        assert_eq!(m.density[0], 2.0);
        assert!(m.cache_defect() < 1e-12);
    }

    #[test]
    fn non_spd_rejected_with_node() {
        let g = build_grid(Topology::Rectangle, 3, 3).unwrap();
        let mut samples = vec![[1.0, 0.0, 1.0]; 9];
        samples[4] = [1.0, 2.0, 1.0]; // det = -3
        match metric_geometry(&g, &samples) {
            Err(Error::NonSpdMetric { node }) => assert_eq!(node, 4),
            other => panic!("expected NonSpdMetric, got {other:?}"),
        }
    }

    #[test]
    fn flat_rectangle_normals() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let m = MetricField::flat(&g);
        let left = g.index(0, 2);
        assert_eq!(boundary_normal(&g, &m, left).unwrap(), [-1.0, 0.0]);
        let bottom = g.index(2, 0);
        assert_eq!(boundary_normal(&g, &m, bottom).unwrap(), [0.0, -1.0]);
    }

    #[test]
    fn scaled_metric_normal_has_unit_g_length() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let m = metric_preset(&g, "diag(4,1)").unwrap();
        let left = g.index(0, 2);
        let nu = boundary_normal(&g, &m, left).unwrap();
        assert!((nu[0] + 2.0).abs() < 1e-14 && nu[1] == 0.0, "nu = (-2, 0)");
        assert!((conorm_sq(&m, left, nu) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn annulus_outer_normal() {
        let g = build_grid(Topology::Annulus, 5, 8).unwrap();
        let m = MetricField::flat(&g);
        let outer = g.index(4, 3);
        assert_eq!(boundary_normal(&g, &m, outer).unwrap(), [1.0, 0.0]);
    }

    #[test]
    fn interior_node_rejected() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let m = MetricField::flat(&g);
        assert!(matches!(
            boundary_normal(&g, &m, g.index(2, 2)),
            Err(Error::InteriorNode { .. })
        ));
    }

    #[test]
    fn all_normals_unit_length_across_sizes() {
        for &(n1, n2) in &[(3usize, 4usize), (9, 5), (16, 16)] {
            let g = build_grid(Topology::Rectangle, n1, n2).unwrap();
            let samples: Vec<[f64; 3]> = (0..g.num_nodes())
                .map(|i| {
                    let (x, y) = g.position(i);
                    let c = 1.0 + 0.3 * (x * y);
                    [c, 0.0, c]
                })
                .collect();
            let m = metric_geometry(&g, &samples).unwrap();
            for &(b, _) in &g.boundary_nodes {
                let nu = boundary_normal(&g, &m, b).unwrap();
                assert!((conorm_sq(&m, b, nu) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conformal_expression_preset() {
        let g = build_grid(Topology::Rectangle, 5, 5).unwrap();
        let m = metric_preset(&g, "conformal:1 + 0.5*sin(pi*x1)*cos(pi*x2)").unwrap();
        let idx = g.index(2, 2);
        let (x1, x2) = g.position(idx);
        let expect = 1.0 + 0.5 * (std::f64::consts::PI * x1).sin() * (std::f64::consts::PI * x2).cos();
        assert!((m.g[idx][0] - expect).abs() < 1e-14);
        assert!((m.g[idx][2] - expect).abs() < 1e-14);
    }

    #[test]
    fn expression_parser_rejects_garbage() {
        assert!(parse_expr("sin(").is_err());
        assert!(parse_expr("1 + &").is_err());
        assert!(parse_expr("foo(x1)").is_err());
    }

    #[test]
    fn collar_defect_flags_sheared_metric() {
        let g = build_grid(Topology::Rectangle, 9, 9).unwrap();
        let flat = MetricField::flat(&g);
        assert_eq!(flat.collar_normal_form_defect(&g, 4), 0.0);
        let sheared = metric_geometry(&g, &vec![[1.0, 0.2, 1.0]; 81]).unwrap();
        assert!(sheared.collar_normal_form_defect(&g, 4) > 0.1);
    }
}
