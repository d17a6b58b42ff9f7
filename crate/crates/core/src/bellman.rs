//! Min-max Bellman operators and value iteration for the polyhedral value
//! function.
//!
//! With `V` a polytope norm, the mode-independent operator is
//!
//! ```text
//! T V(x) = ‖x‖₂ + min_u max_i V(A_i x + B_i u)
//! ```
//!
//! and the mode-dependent one swaps the order to `max_i min_{u_i}`. Each is a
//! single LP over the vertex representation of `V`. Value iteration starts
//! from the Euclidean norm sampled on a symmetric direction grid and rebuilds
//! the ball from the boundary points `d / T V(d)` after every sweep.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpResult, StandardResult, StandardSolver};
use crate::model::SwitchedSystem;
use crate::norm::{gauge_facets_2d, rebuild_norm, BalancedPolytopeNorm};

// Relative slack on the optimal value when selecting the minimum-norm
// minimizer from the optimal face.
const FACE_SLACK: f64 = 1e-11;
const GRID_SEED: u64 = 0x5eed_0f_d1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Number of grid directions on the full sphere (antipodal pairs count
    /// twice).
    pub directions: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub v_max: f64,
    pub mode_dependent: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            directions: 360,
            tol: 1e-6,
            max_iters: 500,
            v_max: 1e6,
            mode_dependent: false,
        }
    }
}

impl SynthesisConfig {
    pub fn mode_dependent(mut self, yes: bool) -> Self {
        self.mode_dependent = yes;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.directions % 2 != 0 {
            return Err(Error::Config(format!(
                "direction count {} must be even",
                self.directions
            )));
        }
        if self.directions < 2 * n {
            return Err(Error::Config(format!(
                "direction count {} below 2n = {}",
                self.directions,
                2 * n
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol {} must be positive", self.tol)));
        }
        if !(self.v_max > 1.0) {
            return Err(Error::Config(format!("v_max {} must exceed 1", self.v_max)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// One representative per antipodal pair of an `count`-point symmetric grid
/// on the unit sphere of `R^n`.
///
/// `n = 1` gives `{1}`; `n = 2` gives the angles `2πj/count` in `[0, π)`;
/// higher dimensions use the coordinate axes followed by seeded Gaussian
/// samples, each flipped so its first nonzero coordinate is positive.
pub fn direction_grid(n: usize, count: usize) -> Vec<Vec<f64>> {
    let half = (count / 2).max(1);
    match n {
        1 => vec![vec![1.0]],
        2 => (0..half)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let mut grid = Vec::with_capacity(half.max(n));
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                grid.push(e);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(GRID_SEED);
            while grid.len() < half {
                let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if len < 1e-8 {
                    continue;
                }
                let sign = v.iter().find(|a| **a != 0.0).map_or(1.0, |a| a.signum());
                for a in &mut v {
                    *a *= sign / len;
                }
                grid.push(v);
            }
            grid
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthesisStatus {
    Converged,
    Diverged,
    MaxItersReached,
}

impl std::fmt::Display for SynthesisStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SynthesisStatus::Converged => "Converged",
            SynthesisStatus::Diverged => "Diverged",
            SynthesisStatus::MaxItersReached => "MaxItersReached",
        };
        f.write_str(s)
    }
}

/// Output of value iteration: the synthesized norm and what was proven
/// about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub system_hash: String,
    pub mode_dependent: bool,
    pub norm: BalancedPolytopeNorm,
    pub iterations: usize,
    pub status: SynthesisStatus,
    pub rho: Option<f64>,
    pub c2: Option<f64>,
    pub directions: usize,
    pub tol: f64,
    /// Set for `n ≥ 3`, where the grid is a sample and the certificate is
    /// not sound.
    pub sampled: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CertificateFile {
    system_hash: String,
    mode_dependent: bool,
    status: SynthesisStatus,
    iterations: usize,
    rho: Option<f64>,
    c2: Option<f64>,
    vertices: Vec<Vec<f64>>,
    directions: usize,
    tol: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    sampled: bool,
}

impl Certificate {
    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn is_converged(&self) -> bool {
        self.status == SynthesisStatus::Converged
    }

    /// `1 − 1/c2`, the decrease factor implied by `V(x⁺) ≤ V(x) − ‖x‖`.
    pub fn gamma_bound(&self) -> Option<f64> {
        self.c2.map(|c2| 1.0 - 1.0 / c2)
    }

    pub fn require_converged(&self) -> Result<()> {
        if !self.is_converged() {
            return Err(Error::Certificate(format!("status is {}", self.status)));
        }
        match self.rho {
            Some(rho) if rho < 1.0 => Ok(()),
            Some(rho) => Err(Error::Certificate(format!("rho = {rho} is not below 1"))),
            None => Err(Error::Certificate("rho missing".into())),
        }
    }

    pub fn check_system(&self, system: &SwitchedSystem) -> Result<()> {
        if system.n() != self.dim() {
            return Err(Error::Certificate(format!(
                "certificate dimension {} but system has n = {}",
                self.dim(),
                system.n()
            )));
        }
        if system.hash() != self.system_hash {
            return Err(Error::Certificate("system hash mismatch".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CertificateFile {
            system_hash: self.system_hash.clone(),
            mode_dependent: self.mode_dependent,
            status: self.status,
            iterations: self.iterations,
            rho: self.rho,
            c2: self.c2,
            vertices: self.norm.vertices().to_vec(),
            directions: self.directions,
            tol: self.tol,
            sampled: self.sampled,
        };
        serde_json::to_string_pretty(&file).expect("certificate serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let dim = file
            .vertices
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::Parse("vertices: empty list".into()))?;
        let norm = BalancedPolytopeNorm::new(dim, file.vertices)?;
        Ok(Certificate {
            system_hash: file.system_hash,
            mode_dependent: file.mode_dependent,
            norm,
            iterations: file.iterations,
            status: file.status,
            rho: file.rho,
            c2: file.c2,
            directions: file.directions,
            tol: file.tol,
            sampled: file.sampled,
        })
    }
}

/// Value and minimizer of one application of a Bellman operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanStep {
    pub value: f64,
    /// Optimal max-over-modes norm of the successor (the LP variable `t`).
    pub inner: f64,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependentStep {
    pub value: f64,
    pub inner: Vec<f64>,
    pub u: Vec<DVector<f64>>,
}

fn check_dims(norm: &BalancedPolytopeNorm, system: &SwitchedSystem, x: &[f64]) -> Result<()> {
    if norm.dim() != system.n() {
        return Err(Error::Dimension {
            path: "norm".into(),
            detail: format!("norm dimension {} but system has n = {}", norm.dim(), system.n()),
        });
    }
    if x.len() != system.n() {
        return Err(Error::Dimension {
            path: "x".into(),
            detail: format!("expected {} coordinates, found {}", system.n(), x.len()),
        });
    }
    Ok(())
}

// Basic weight above which a primary optimum counts as nondegenerate.
const UNIQUE_WEIGHT: f64 = 1e-9;

// Facet form of the inner problem for a fixed set of modes. The successor
// cost is max_j (g_j·x + h_j·u), where j runs over both signs of every facet
// functional l of the ball and every selected mode i, with g_j = ±A_iᵀl and
// h_j = ±B_iᵀl. Both coefficient sets are stored coordinate-major so that
// evaluating all pieces is a few vector sweeps. The constraint sets of both
// LPs depend only on h, so their phase-one bases are computed once here.
#[derive(Debug, Clone)]
struct FacetLp {
    pieces: usize,
    // n rows of length `pieces`
    g: Vec<f64>,
    // m rows of length `pieces`
    h: Vec<f64>,
    // min −g·μ s.t. Σ μ_j h_j = 0, Σ μ_j = 1, μ ≥ 0
    primary: StandardSolver,
    // min Σ μ_j (t_b − g_j·x) s.t. Σ μ_j h_j + ν⁺ − ν⁻ = 0, ν⁺ + ν⁻ = 1,
    // the dual of min ‖u‖₁ over the face {max_j (g_j·x + h_j·u) ≤ t_b}
    secondary: StandardSolver,
}

impl FacetLp {
    fn new(system: &SwitchedSystem, functionals: &[Vec<f64>], modes: &[usize]) -> Result<Self> {
        let (n, m) = (system.n(), system.m());
        let pieces = 2 * functionals.len() * modes.len();
        let mut g = vec![0.0; n * pieces];
        let mut h = vec![0.0; m * pieces];
        let mut j = 0;
        for &i in modes {
            let (a, b) = (system.a(i), system.b(i));
            for l in functionals {
                let l = DVector::from_column_slice(l);
                let ga = a.transpose() * &l;
                let hb = b.transpose() * &l;
                for sign in [1.0, -1.0] {
                    for k in 0..n {
                        g[k * pieces + j] = sign * ga[k];
                    }
                    for k in 0..m {
                        h[k * pieces + j] = sign * hb[k];
                    }
                    j += 1;
                }
            }
        }

        let mut a1 = h.clone();
        a1.extend(std::iter::repeat_n(1.0, pieces));
        let mut b1 = vec![0.0; m + 1];
        b1[m] = 1.0;
        let primary = StandardSolver::new(m + 1, a1, b1)?;

        let rows = 2 * m;
        let cols = pieces + rows;
        let mut a2 = vec![0.0; cols * rows];
        for k in 0..m {
            let row = &mut a2[k * cols..(k + 1) * cols];
            row[..pieces].copy_from_slice(&h[k * pieces..(k + 1) * pieces]);
            row[pieces + 2 * k] = 1.0;
            row[pieces + 2 * k + 1] = -1.0;
            let srow = &mut a2[(m + k) * cols..(m + k + 1) * cols];
            srow[pieces + 2 * k] = -1.0;
            srow[pieces + 2 * k + 1] = -1.0;
        }
        let mut b2 = vec![0.0; rows];
        b2[m..].fill(-1.0);
        let secondary = StandardSolver::new(rows, a2, b2)?;
        Ok(FacetLp {
            pieces,
            g,
            h,
            primary,
            secondary,
        })
    }

    // g_j·x for every piece
    fn offsets(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.pieces];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                for (o, gk) in out.iter_mut().zip(&self.g[k * self.pieces..(k + 1) * self.pieces]) {
                    *o += xk * gk;
                }
            }
        }
        out
    }

    // max_j (g_j·x + h_j·u) given the offsets g_j·x
    fn cost_at(&self, offsets: &[f64], u: &[f64]) -> f64 {
        let mut vals = offsets.to_vec();
        for (k, &uk) in u.iter().enumerate() {
            if uk != 0.0 {
                for (v, hk) in vals.iter_mut().zip(&self.h[k * self.pieces..(k + 1) * self.pieces]) {
                    *v += uk * hk;
                }
            }
        }
        vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    fn solve(&self, m: usize, x: &[f64], select: bool) -> Result<(f64, DVector<f64>)> {
        if !self.primary.is_feasible() {
            return Err(Error::Unbounded);
        }
        let off = self.offsets(x);
        let c: Vec<f64> = off.iter().map(|v| -v).collect();
        // The simplex multipliers on the first m rows are a minimizer u. When
        // all m + 1 basic weights are positive, complementary slackness pins
        // the multipliers down, so the minimizer is unique and needs no
        // tie-break.
        let (u0, unique) = match self.primary.solve(&c)? {
            StandardResult::Optimal { y, x, .. } => {
                let support = x.iter().filter(|&&v| v > UNIQUE_WEIGHT).count();
                (y[..m].to_vec(), support == m + 1)
            }
            StandardResult::Infeasible => return Err(Error::Unbounded),
            StandardResult::Unbounded => {
                return Err(Error::Invariant("Bellman LP infeasible".into()))
            }
        };
        let t_star = self.cost_at(&off, &u0);
        if !select || unique {
            return Ok((t_star, DVector::from_vec(u0)));
        }

        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let t_b = t_star * (1.0 + FACE_SLACK) + 1e-14 * scale;
        let mut c: Vec<f64> = off.iter().map(|gj| t_b - gj).collect();
        c.extend(std::iter::repeat_n(0.0, 2 * m));
        let u = match self.secondary.solve(&c)? {
            StandardResult::Optimal { y, .. } => {
                let u1 = &y[..m];
                if self.cost_at(&off, u1) <= t_b + 1e-12 * (1.0 + t_b.abs()) {
                    u1.to_vec()
                } else {
                    u0
                }
            }
            _ => u0,
        };
        Ok((t_star, DVector::from_vec(u)))
    }
}

#[derive(Debug, Clone)]
struct Facets {
    functionals: Vec<Vec<f64>>,
    all_modes: FacetLp,
    per_mode: Vec<FacetLp>,
}

/// The inner minimization `min_u max_{i∈S} V(A_i x + B_i u)` for a fixed
/// norm and system, over any subset `S` of modes.
///
/// When the ball's facet functionals are known (`n = 1`, convex planar
/// balls) the problem is posed as `min t s.t. ±l·(A_i x + B_i u) ≤ t` and
/// solved through its dual, which has only `m + 1` rows; the minimizer is
/// read off the simplex multipliers. Otherwise the vertex form
/// `A_i x + B_i u = P λ_i, ‖λ_i‖₁ ≤ t` is solved directly. In both cases a
/// second LP selects the minimum-1-norm `u` on the optimal face.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    norm: BalancedPolytopeNorm,
    system: SwitchedSystem,
    facets: Option<Facets>,
}

impl BellmanOperator {
    pub fn new(norm: &BalancedPolytopeNorm, system: &SwitchedSystem) -> Result<Self> {
        if norm.dim() != system.n() {
            return Err(Error::Dimension {
                path: "norm".into(),
                detail: format!("norm dimension {} but system has n = {}", norm.dim(), system.n()),
            });
        }
        let facets = match norm.half_functionals() {
            Some(functionals) if system.m() > 0 => {
                let all: Vec<usize> = (0..system.num_modes()).collect();
                let all_modes = FacetLp::new(system, &functionals, &all)?;
                let per_mode = (0..system.num_modes())
                    .map(|i| FacetLp::new(system, &functionals, &[i]))
                    .collect::<Result<Vec<_>>>()?;
                Some(Facets {
                    functionals,
                    all_modes,
                    per_mode,
                })
            }
            _ => None,
        };
        Ok(BellmanOperator {
            norm: norm.clone(),
            system: system.clone(),
            facets,
        })
    }

    /// Forces the vertex-form LP even when facets are available.
    pub fn vertex_form(norm: &BalancedPolytopeNorm, system: &SwitchedSystem) -> Result<Self> {
        let mut op = BellmanOperator::new(norm, system)?;
        op.facets = None;
        Ok(op)
    }

    pub fn norm(&self) -> &BalancedPolytopeNorm {
        &self.norm
    }

    pub fn system(&self) -> &SwitchedSystem {
        &self.system
    }

    /// Optimal value `t*` and the minimum-1-norm minimizer over `modes`.
    pub fn inner(&self, modes: &[usize], x: &[f64]) -> Result<(f64, DVector<f64>)> {
        self.inner_impl(modes, x, true)
    }

    /// Optimal value `t*` only.
    pub fn inner_value(&self, modes: &[usize], x: &[f64]) -> Result<f64> {
        Ok(self.inner_impl(modes, x, false)?.0)
    }

    fn inner_impl(&self, modes: &[usize], x: &[f64], select: bool) -> Result<(f64, DVector<f64>)> {
        check_dims(&self.norm, &self.system, x)?;
        if let Some(&i) = modes.iter().find(|&&i| i >= self.system.num_modes()) {
            return Err(Error::Config(format!(
                "mode index {i} out of range for {} modes",
                self.system.num_modes()
            )));
        }
        let m = self.system.m();
        if m == 0 {
            let xv = DVector::from_column_slice(x);
            let mut t = 0.0f64;
            for &i in modes {
                t = t.max(self.norm.eval_vec(&(self.system.a(i) * &xv))?);
            }
            return Ok((t, DVector::zeros(0)));
        }
        match &self.facets {
            Some(f) => {
                let all = modes.len() == self.system.num_modes()
                    && modes.iter().enumerate().all(|(k, &i)| k == i);
                if all {
                    f.all_modes.solve(m, x, select)
                } else if let [i] = modes {
                    f.per_mode[*i].solve(m, x, select)
                } else {
                    FacetLp::new(&self.system, &f.functionals, modes)?.solve(m, x, select)
                }
            }
            None => InnerLp {
                norm: &self.norm,
                system: &self.system,
                modes: modes.to_vec(),
            }
            .solve(x, select),
        }
    }

    /// `‖x‖ + min_u max_i V(A_i x + B_i u)`.
    pub fn independent(&self, x: &[f64]) -> Result<BellmanStep> {
        let modes: Vec<usize> = (0..self.system.num_modes()).collect();
        let (t, u) = self.inner(&modes, x)?;
        Ok(BellmanStep {
            value: euclid(x) + t,
            inner: t,
            u,
        })
    }

    /// `‖x‖ + max_i min_{u_i} V(A_i x + B_i u_i)`.
    pub fn dependent(&self, x: &[f64]) -> Result<DependentStep> {
        let mut inner = Vec::with_capacity(self.system.num_modes());
        let mut us = Vec::with_capacity(self.system.num_modes());
        for i in 0..self.system.num_modes() {
            let (t, u) = self.inner(&[i], x)?;
            inner.push(t);
            us.push(u);
        }
        let worst = inner.iter().copied().fold(0.0, f64::max);
        Ok(DependentStep {
            value: euclid(x) + worst,
            inner,
            u: us,
        })
    }

    /// Bellman value only; skips the minimizer selection.
    pub fn value(&self, x: &[f64], mode_dependent: bool) -> Result<f64> {
        let n_modes = self.system.num_modes();
        let t = if mode_dependent {
            let mut worst = 0.0f64;
            for i in 0..n_modes {
                worst = worst.max(self.inner_value(&[i], x)?);
            }
            worst
        } else {
            let modes: Vec<usize> = (0..n_modes).collect();
            self.inner_value(&modes, x)?
        };
        Ok(euclid(x) + t)
    }

    /// Homogeneous selection `Φ(x)` of the mode-independent argmin.
    pub fn feedback(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dims(&self.norm, &self.system, x)?;
        let Some((scale, d)) = canonical(x) else {
            return Ok(DVector::zeros(self.system.m()));
        };
        Ok(self.independent(&d)?.u * scale)
    }

    /// Homogeneous selection `Φ_d(i, x)` of the per-mode argmin.
    pub fn feedback_mode(&self, mode: usize, x: &[f64]) -> Result<DVector<f64>> {
        check_dims(&self.norm, &self.system, x)?;
        if mode >= self.system.num_modes() {
            return Err(Error::Controller(format!("mode index {mode} out of range")));
        }
        let Some((scale, d)) = canonical(x) else {
            return Ok(DVector::zeros(self.system.m()));
        };
        Ok(self.inner(&[mode], &d)?.1 * scale)
    }

    /// `max_i V(A_i x + B_i Φ(x)) / V(x)` for the feedback of the given kind.
    pub fn closed_loop_ratio(&self, x: &[f64], mode_dependent: bool) -> Result<f64> {
        let vx = self.norm.eval(x)?;
        if vx == 0.0 {
            return Ok(0.0);
        }
        let xv = DVector::from_column_slice(x);
        let mut worst = 0.0f64;
        if mode_dependent {
            for i in 0..self.system.num_modes() {
                let u = self.feedback_mode(i, x)?;
                worst = worst.max(self.norm.eval_vec(&self.system.step(i, &xv, &u))?);
            }
        } else {
            let u = self.feedback(x)?;
            for i in 0..self.system.num_modes() {
                worst = worst.max(self.norm.eval_vec(&self.system.step(i, &xv, &u))?);
            }
        }
        Ok(worst / vx)
    }
}

// Vertex-form LP. Column layout: [u (m, free) | s (m, ≥0) | t (≥0) | per
// mode: λ⁺ (k), λ⁻ (k)]. `s` bounds |u| and is only used when choosing the
// minimum-norm point of the optimal face.
struct InnerLp<'a> {
    norm: &'a BalancedPolytopeNorm,
    system: &'a SwitchedSystem,
    modes: Vec<usize>,
}

impl InnerLp<'_> {
    fn k(&self) -> usize {
        self.norm.vertices().len()
    }

    fn width(&self) -> usize {
        2 * self.system.m() + 1 + 2 * self.k() * self.modes.len()
    }

    fn lam(&self, slot: usize) -> usize {
        2 * self.system.m() + 1 + 2 * self.k() * slot
    }

    /// With `t_bound = None` the objective is `t`; otherwise `t ≤ t_bound`
    /// is imposed and `Σ s` (the 1-norm of `u`) is minimized.
    fn build(&self, x: &[f64], t_bound: Option<f64>) -> LinearProgram {
        let (n, m, k) = (self.system.n(), self.system.m(), self.k());
        let w = self.width();
        let t_col = 2 * m;
        let mut c = vec![0.0; w];
        match t_bound {
            None => c[t_col] = 1.0,
            Some(_) => c[m..2 * m].iter_mut().for_each(|v| *v = 1.0),
        }
        let mut lp = LinearProgram::new(c);
        for j in m..w {
            lp.nonneg(j);
        }
        for (slot, &i) in self.modes.iter().enumerate() {
            let a = self.system.a(i);
            let b = self.system.b(i);
            let base = self.lam(slot);
            for r in 0..n {
                let mut row = vec![0.0; w];
                for j in 0..m {
                    row[j] = b[(r, j)];
                }
                for (j, p) in self.norm.vertices().iter().enumerate() {
                    row[base + j] = -p[r];
                    row[base + k + j] = p[r];
                }
                let ax: f64 = (0..n).map(|col| a[(r, col)] * x[col]).sum();
                lp.add_eq(row, -ax);
            }
            let mut row = vec![0.0; w];
            row[base..base + 2 * k].iter_mut().for_each(|v| *v = 1.0);
            row[t_col] = -1.0;
            lp.add_leq(row, 0.0);
        }
        if let Some(bound) = t_bound {
            let mut row = vec![0.0; w];
            row[t_col] = 1.0;
            lp.add_leq(row, bound);
            for j in 0..m {
                let mut row = vec![0.0; w];
                row[j] = 1.0;
                row[m + j] = -1.0;
                lp.add_leq(row, 0.0);
                let mut row = vec![0.0; w];
                row[j] = -1.0;
                row[m + j] = -1.0;
                lp.add_leq(row, 0.0);
            }
        }
        lp
    }

    fn solve(&self, x: &[f64], select: bool) -> Result<(f64, DVector<f64>)> {
        let m = self.system.m();
        let (t_star, u0) = match solve_lp(&self.build(x, None))? {
            LpResult::Optimal { z, .. } => (z[2 * m], DVector::from_column_slice(&z[..m])),
            LpResult::Unbounded => return Err(Error::Unbounded),
            LpResult::Infeasible => {
                return Err(Error::Invariant("Bellman LP infeasible".into()))
            }
        };
        if !select {
            return Ok((t_star, u0));
        }
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let bound = t_star * (1.0 + FACE_SLACK) + 1e-14 * scale;
        let u = match solve_lp(&self.build(x, Some(bound)))? {
            LpResult::Optimal { z, .. } => DVector::from_column_slice(&z[..m]),
            other => {
                return Err(Error::Invariant(format!(
                    "minimum-norm selection returned {other:?}"
                )))
            }
        };
        Ok((t_star, u))
    }
}

/// `‖x‖ + min_u max_i V(A_i x + B_i u)`, with the minimum-norm minimizer.
pub fn bellman_independent(
    norm: &BalancedPolytopeNorm,
    system: &SwitchedSystem,
    x: &[f64],
) -> Result<BellmanStep> {
    check_dims(norm, system, x)?;
    BellmanOperator::new(norm, system)?.independent(x)
}

/// `‖x‖ + max_i min_{u_i} V(A_i x + B_i u_i)`, one LP per mode.
pub fn bellman_dependent(
    norm: &BalancedPolytopeNorm,
    system: &SwitchedSystem,
    x: &[f64],
) -> Result<DependentStep> {
    check_dims(norm, system, x)?;
    BellmanOperator::new(norm, system)?.dependent(x)
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// x = sign · s · d with s = ‖x‖₂ and d canonical (first nonzero coordinate
// positive). Evaluating the argmin at d and scaling back makes the selected
// feedback homogeneous of degree one by construction.
fn canonical(x: &[f64]) -> Option<(f64, Vec<f64>)> {
    let s = euclid(x);
    if s == 0.0 {
        return None;
    }
    let sign = x.iter().find(|v| **v != 0.0).map_or(1.0, |v| v.signum());
    Some((sign * s, x.iter().map(|v| v * sign / s).collect()))
}

/// Maximum of the norm over the unit sphere: exact for `n ≤ 2`, otherwise
/// the maximum over `grid`.
pub fn sphere_max(norm: &BalancedPolytopeNorm, grid: &[Vec<f64>]) -> Result<f64> {
    let mut best = 0.0f64;
    for d in grid {
        best = best.max(norm.eval(d)?);
    }
    match norm.dim() {
        1 => Ok(best.max(1.0 / norm.vertices()[0][0].abs())),
        2 if norm.polygon_convex() => {
            let exact = gauge_facets_2d(norm)?
                .iter()
                .map(|l| l[0].hypot(l[1]))
                .fold(0.0, f64::max);
            Ok(best.max(exact))
        }
        _ => Ok(best),
    }
}

/// Per-iteration record of value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `T V_k(d)` at each grid representative.
    pub bellman_values: Vec<f64>,
    /// Rebuilt norm `V_{k+1}` at each grid representative.
    pub grid_values: Vec<f64>,
    pub max_rel_change: f64,
}

/// Value iteration from `V₀ = ‖·‖₂` (sampled on the grid).
pub fn value_iteration(system: &SwitchedSystem, config: &SynthesisConfig) -> Result<Certificate> {
    value_iteration_traced(system, config).map(|(cert, _)| cert)
}

/// As [`value_iteration`], also returning every iterate's grid values.
pub fn value_iteration_traced(
    system: &SwitchedSystem,
    config: &SynthesisConfig,
) -> Result<(Certificate, Vec<IterationRecord>)> {
    let n = system.n();
    config.validate(n)?;
    let grid = direction_grid(n, config.directions);
    let mut norm = rebuild_norm(n, &grid)?;
    let mut values: Vec<f64> = grid.iter().map(|d| norm.eval(d)).collect::<Result<_>>()?;
    let mut trace = Vec::new();
    let mut status = SynthesisStatus::MaxItersReached;
    let mut iterations = config.max_iters;

    for iter in 1..=config.max_iters {
        let op = BellmanOperator::new(&norm, system)?;
        let bellman: Vec<f64> = grid
            .par_iter()
            .map(|d| op.value(d, config.mode_dependent))
            .collect::<Result<_>>()?;
        let diverged = bellman.iter().any(|v| !(v.is_finite() && *v <= config.v_max));
        let points: Vec<Vec<f64>> = grid
            .iter()
            .zip(&bellman)
            .map(|(d, t)| d.iter().map(|v| v / t).collect())
            .collect();
        let next = if bellman.iter().all(|v| v.is_finite()) {
            Some(rebuild_norm(n, &points)?)
        } else {
            None
        };
        let next_values: Vec<f64> = match &next {
            Some(nn) => grid.iter().map(|d| nn.eval(d)).collect::<Result<_>>()?,
            None => bellman.clone(),
        };
        let change = next_values
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0, f64::max);
        trace.push(IterationRecord {
            iteration: iter,
            bellman_values: bellman,
            grid_values: next_values.clone(),
            max_rel_change: change,
        });
        if let Some(nn) = next {
            norm = nn;
        }
        values = next_values;
        if diverged {
            status = SynthesisStatus::Diverged;
            iterations = iter;
            break;
        }
        if change <= config.tol {
            status = SynthesisStatus::Converged;
            iterations = iter;
            break;
        }
    }

    let mut cert = Certificate {
        system_hash: system.hash(),
        mode_dependent: config.mode_dependent,
        norm,
        iterations,
        status,
        rho: None,
        c2: None,
        directions: config.directions,
        tol: config.tol,
        sampled: n >= 3,
    };
    if status == SynthesisStatus::Converged {
        let test = direction_grid(n, 2 * config.directions);
        let op = BellmanOperator::new(&cert.norm, system)?;
        let ratios: Vec<f64> = test
            .par_iter()
            .map(|d| op.closed_loop_ratio(d, config.mode_dependent))
            .collect::<Result<_>>()?;
        cert.rho = Some(ratios.into_iter().fold(0.0, f64::max));
        cert.c2 = Some(sphere_max(&cert.norm, &test)?);
    }
    Ok((cert, trace))
}
