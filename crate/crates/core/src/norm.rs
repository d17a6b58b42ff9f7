//! Norms whose unit ball is a centrally symmetric polytope.
//!
//! A [`BalancedPolytopeNorm`] stores one representative `p_j` per antipodal
//! pair of ball vertices; the ball is `conv{±p_j}` and the norm is its gauge
//! `x ↦ min{t ≥ 0 : x ∈ t·ball}`. In the plane the representatives are kept
//! sorted by angle in `[0, π)` and, when they are in convex position, the
//! edge functionals are cached so that evaluation is a max over dot products.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpResult};

const COLLINEAR_TOL: f64 = 1e-12;
const CONVEXITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedPolytopeNorm {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    // edge functionals l_j with l_j·p = 1 on edge j, for the first half of the
    // symmetric polygon; present only for convex planar balls
    facets: Option<Vec<[f64; 2]>>,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn upper_half(p: [f64; 2]) -> [f64; 2] {
    if p[1] < 0.0 || (p[1] == 0.0 && p[0] < 0.0) {
        [-p[0], -p[1]]
    } else {
        p
    }
}

fn angle(p: [f64; 2]) -> f64 {
    p[1].atan2(p[0])
}

fn by_angle(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    angle(*a)
        .total_cmp(&angle(*b))
        .then_with(|| (a[0] * a[0] + a[1] * a[1]).total_cmp(&(b[0] * b[0] + b[1] * b[1])))
}

impl BalancedPolytopeNorm {
    /// Validates and stores `vertices` without pruning. Planar vertices are
    /// moved to the upper half-plane and sorted by angle.
    pub fn new(dim: usize, vertices: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNorm("dimension must be positive".into()));
        }
        for (j, p) in vertices.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension {
                    path: format!("vertices[{j}]"),
                    detail: format!("expected {dim} coordinates, found {}", p.len()),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("vertices[{j}]")));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidNorm(format!("vertices[{j}] is zero")));
            }
        }
        if vertices.is_empty() {
            return Err(Error::NotFullDimensional);
        }
        let vertices = if dim == 2 {
            let mut pts: Vec<[f64; 2]> =
                vertices.iter().map(|p| upper_half([p[0], p[1]])).collect();
            pts.sort_by(by_angle);
            pts.into_iter().map(|p| p.to_vec()).collect()
        } else {
            vertices
        };
        let mut norm = BalancedPolytopeNorm {
            dim,
            vertices,
            facets: None,
        };
        if !norm.full_dimensional() {
            return Err(Error::NotFullDimensional);
        }
        if dim == 2 && norm.polygon_convex() {
            norm.facets = Some(norm.half_facets());
        }
        Ok(norm)
    }

    /// Unit ball of the 1-norm, i.e. `conv{±e_i}`.
    pub fn cross_polytope(dim: usize) -> Self {
        let vertices = (0..dim)
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[i] = 1.0;
                v
            })
            .collect();
        BalancedPolytopeNorm::new(dim, vertices).expect("cross-polytope is a valid ball")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Returns a copy with every vertex multiplied by `1/c`, i.e. the norm
    /// `c·V`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| p.iter().map(|v| v / c).collect())
            .collect();
        BalancedPolytopeNorm::new(self.dim, vertices)
    }

    fn full_dimensional(&self) -> bool {
        match self.dim {
            1 => true,
            2 => {
                let first = [self.vertices[0][0], self.vertices[0][1]];
                let scale = self
                    .vertices
                    .iter()
                    .map(|p| p[0].hypot(p[1]))
                    .fold(0.0, f64::max);
                self.vertices
                    .iter()
                    .any(|p| cross(first, [p[0], p[1]]).abs() > COLLINEAR_TOL * scale * scale)
            }
            n => {
                let mat = DMatrix::from_fn(n, self.vertices.len(), |r, c| self.vertices[c][r]);
                let sv = mat.singular_values();
                let max = sv.max();
                sv.iter().filter(|&&s| s > 1e-12 * max).count() == n
            }
        }
    }

    /// Vertices of the full symmetric polygon in counter-clockwise order
    /// starting at angle 0.
    pub fn full_polygon(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(Error::InvalidNorm(format!(
                "polygon requested for dimension {}",
                self.dim
            )));
        }
        let half: Vec<[f64; 2]> = self.vertices.iter().map(|p| [p[0], p[1]]).collect();
        let mut full = half.clone();
        full.extend(half.iter().map(|p| [-p[0], -p[1]]));
        Ok(full)
    }

    /// Convexity of the planar ball: every turn of the full polygon is a
    /// left turn up to `1e-12`.
    pub fn polygon_convex(&self) -> bool {
        let Ok(poly) = self.full_polygon() else {
            return true;
        };
        let k = poly.len();
        (0..k).all(|j| {
            let a = poly[j];
            let b = poly[(j + 1) % k];
            let c = poly[(j + 2) % k];
            cross([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]) >= -CONVEXITY_TOL
        })
    }

    fn half_facets(&self) -> Vec<[f64; 2]> {
        let poly = self.full_polygon().expect("planar norm");
        let k = self.vertices.len();
        (0..k)
            .map(|j| edge_functional(poly[j], poly[j + 1]))
            .collect()
    }

    /// Functionals `l` with `V(x) = max_l |l·x|`, when they are known in
    /// closed form (`dim = 1`, or a convex planar ball).
    pub fn half_functionals(&self) -> Option<Vec<Vec<f64>>> {
        match self.dim {
            1 => {
                let r = self.vertices.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
                Some(vec![vec![1.0 / r]])
            }
            2 => self
                .facets
                .as_ref()
                .map(|f| f.iter().map(|l| l.to_vec()).collect()),
            _ => None,
        }
    }

    /// Gauge value; see [`gauge_evaluate`].
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        gauge_evaluate(self, x)
    }

    pub fn eval_vec(&self, x: &DVector<f64>) -> Result<f64> {
        gauge_evaluate(self, x.as_slice())
    }
}

fn edge_functional(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let det = cross(a, b);
    [(b[1] - a[1]) / det, (a[0] - b[0]) / det]
}

/// `min{t ≥ 0 : x ∈ t·conv{±p_j}}`.
///
/// For convex planar balls and for `dim = 1` this is read off the cached
/// edge functionals (the optimal bases of the LP below); otherwise it is the
/// LP `min Σ(λ⁺+λ⁻)  s.t.  x = Σ p_j (λ⁺_j − λ⁻_j),  λ± ≥ 0`.
pub fn gauge_evaluate(norm: &BalancedPolytopeNorm, x: &[f64]) -> Result<f64> {
    if x.len() != norm.dim {
        return Err(Error::Dimension {
            path: "x".into(),
            detail: format!("expected {} coordinates, found {}", norm.dim, x.len()),
        });
    }
    if norm.dim == 1 {
        let r = norm.vertices.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        return Ok(x[0].abs() / r);
    }
    if let Some(facets) = &norm.facets {
        let v = facets
            .iter()
            .map(|l| (l[0] * x[0] + l[1] * x[1]).abs())
            .fold(0.0, f64::max);
        return Ok(v);
    }
    gauge_evaluate_lp(norm, x)
}

/// The gauge LP, solved unconditionally.
pub fn gauge_evaluate_lp(norm: &BalancedPolytopeNorm, x: &[f64]) -> Result<f64> {
    if x.len() != norm.dim {
        return Err(Error::Dimension {
            path: "x".into(),
            detail: format!("expected {} coordinates, found {}", norm.dim, x.len()),
        });
    }
    if x.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let k = norm.vertices.len();
    let mut lp = LinearProgram::new(vec![1.0; 2 * k]);
    for j in 0..2 * k {
        lp.nonneg(j);
    }
    for (r, &xr) in x.iter().enumerate() {
        let mut row = vec![0.0; 2 * k];
        for (j, p) in norm.vertices.iter().enumerate() {
            row[j] = p[r];
            row[k + j] = -p[r];
        }
        lp.add_eq(row, xr);
    }
    match solve_lp(&lp)? {
        LpResult::Optimal { value, .. } => Ok(value.max(0.0)),
        other => Err(Error::Invariant(format!("gauge LP returned {other:?}"))),
    }
}

/// Edge functionals of the full planar polygon, counter-clockwise; the gauge
/// is `max_l l·x`.
pub fn gauge_facets_2d(norm: &BalancedPolytopeNorm) -> Result<Vec<[f64; 2]>> {
    let poly = norm.full_polygon()?;
    let k = poly.len();
    let area2: f64 = (0..k).map(|j| cross(poly[j], poly[(j + 1) % k])).sum();
    if !(area2 > 0.0) {
        return Err(Error::NotFullDimensional);
    }
    Ok((0..k)
        .map(|j| edge_functional(poly[j], poly[(j + 1) % k]))
        .collect())
}

/// Smallest symmetric ball `conv{±points}` as a norm.
///
/// In the plane the convex hull is computed exactly (interior and collinear
/// points are dropped); in one dimension the outermost point is kept; in
/// higher dimensions every point is retained as a vertex.
pub fn rebuild_norm(dim: usize, points: &[Vec<f64>]) -> Result<BalancedPolytopeNorm> {
    if points.is_empty() {
        return Err(Error::NotFullDimensional);
    }
    for (j, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Dimension {
                path: format!("points[{j}]"),
                detail: format!("expected {dim} coordinates, found {}", p.len()),
            });
        }
        if p.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidNorm(format!("points[{j}] is zero")));
        }
    }
    match dim {
        1 => {
            let best = points
                .iter()
                .map(|p| p[0].abs())
                .fold(0.0, f64::max);
            BalancedPolytopeNorm::new(1, vec![vec![best]])
        }
        2 => {
            let hull = symmetric_hull_2d(points);
            if hull.len() < 2 {
                return Err(Error::NotFullDimensional);
            }
            BalancedPolytopeNorm::new(2, hull.into_iter().map(|p| p.to_vec()).collect())
        }
        _ => BalancedPolytopeNorm::new(dim, points.to_vec()),
    }
}

// Monotone chain over ±points; returns the hull vertices in the upper
// half-plane, sorted by angle.
fn symmetric_hull_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let mut all: Vec<[f64; 2]> = Vec::with_capacity(2 * points.len());
    for p in points {
        all.push([p[0], p[1]]);
        all.push([-p[0], -p[1]]);
    }
    all.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    all.dedup();

    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        let u = [a[0] - o[0], a[1] - o[1]];
        let v = [b[0] - o[0], b[1] - o[1]];
        let c = cross(u, v);
        let scale = u[0].hypot(u[1]) * v[0].hypot(v[1]);
        c > COLLINEAR_TOL * scale
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &all {
        while lower.len() >= 2 && !turn(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in all.iter().rev() {
        while upper.len() >= 2 && !turn(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    let mut half: Vec<[f64; 2]> = lower
        .into_iter()
        .filter(|p| p[1] > 0.0 || (p[1] == 0.0 && p[0] > 0.0))
        .collect();
    half.sort_by(by_angle);
    half.dedup();
    half
}
