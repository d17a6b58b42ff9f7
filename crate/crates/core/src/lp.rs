//! Dense two-phase simplex.
//!
//! The solver works on a full tableau, which is the right trade-off for the
//! problems built elsewhere in this crate: a handful of rows and at most a
//! few thousand columns. Pricing starts with the largest-coefficient rule and
//! falls back to Bland's rule after a fixed pivot budget, so every solve
//! terminates. Feasibility tolerances are fixed constants; the reduced-cost
//! tolerance of [`StandardSolver`] scales with the largest cost coefficient.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal/dual feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance.
pub const OPT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const GROWTH_LIMIT: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch in linear program: {0}")]
    Dimension(String),
    #[error("non-finite coefficient in linear program: {0}")]
    NonFinite(String),
    #[error("numerical breakdown in simplex: {0}")]
    Breakdown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    Free,
    NonNegative,
}

/// `minimize c·z  s.t.  G z <= h,  E z = f`.
///
/// Rows of `g` and `e` are stored densely. Variables are free unless marked
/// otherwise in `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub bounds: Vec<VarBound>,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        LinearProgram {
            c,
            g: Vec::new(),
            h: Vec::new(),
            e: Vec::new(),
            f: Vec::new(),
            bounds: vec![VarBound::Free; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn nonneg(&mut self, j: usize) -> &mut Self {
        self.bounds[j] = VarBound::NonNegative;
        self
    }

    pub fn add_leq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.g.push(row);
        self.h.push(rhs);
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.e.push(row);
        self.f.push(rhs);
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.c.len();
        if self.bounds.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.g.len() != self.h.len() {
            return Err(LpError::Dimension(format!(
                "{} inequality rows but {} right-hand sides",
                self.g.len(),
                self.h.len()
            )));
        }
        if self.e.len() != self.f.len() {
            return Err(LpError::Dimension(format!(
                "{} equality rows but {} right-hand sides",
                self.e.len(),
                self.f.len()
            )));
        }
        for (name, rows) in [("G", &self.g), ("E", &self.e)] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(LpError::Dimension(format!(
                        "{name}[{i}] has {} entries, expected {n}",
                        row.len()
                    )));
                }
                if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                    return Err(LpError::NonFinite(format!("{name}[{i}][{j}]")));
                }
            }
        }
        for (name, v) in [("c", &self.c), ("h", &self.h), ("f", &self.f)] {
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(LpError::NonFinite(format!("{name}[{j}]")));
            }
        }
        Ok(())
    }

    /// Largest constraint violation of `z`.
    pub fn residual(&self, z: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = 0.0f64;
        for (row, &rhs) in self.g.iter().zip(&self.h) {
            worst = worst.max(dot(row) - rhs);
        }
        for (row, &rhs) in self.e.iter().zip(&self.f) {
            worst = worst.max((dot(row) - rhs).abs());
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if *b == VarBound::NonNegative {
                worst = worst.max(-z[j]);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    /// `duals` holds one multiplier per constraint, inequality rows first,
    /// with `c = Gᵀy_G + Eᵀy_E + (bound multipliers)` and `y_G ≤ 0`.
    Optimal {
        z: Vec<f64>,
        value: f64,
        duals: Vec<f64>,
    },
    Unbounded,
    Infeasible,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        matches!(self, LpResult::Optimal { .. })
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult, LpError> {
    lp.validate()?;
    let mut tab = Tableau::build(lp);
    tab.solve(lp)
}

// Column layout of the tableau: structural columns (one per non-negative
// variable, two per free variable), then one slack per inequality row, then
// artificials, then the right-hand side.
struct Tableau {
    rows: usize,
    width: usize,
    n_struct: usize,
    n_slack: usize,
    n_art: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    // (positive column, optional negative column) per original variable
    var_cols: Vec<(usize, Option<usize>)>,
    // artificial column and sign flip per row
    row_art: Vec<Option<usize>>,
    row_sign: Vec<f64>,
    scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut var_cols = Vec::with_capacity(lp.num_vars());
        let mut n_struct = 0;
        for b in &lp.bounds {
            match b {
                VarBound::NonNegative => {
                    var_cols.push((n_struct, None));
                    n_struct += 1;
                }
                VarBound::Free => {
                    var_cols.push((n_struct, Some(n_struct + 1)));
                    n_struct += 2;
                }
            }
        }
        let n_ineq = lp.g.len();
        let rows = n_ineq + lp.e.len();

        // rows needing an artificial: equalities, and inequalities with h < 0
        let mut needs_art = Vec::with_capacity(rows);
        for &rhs in &lp.h {
            needs_art.push(rhs < 0.0);
        }
        needs_art.extend(std::iter::repeat_n(true, lp.e.len()));
        let n_art = needs_art.iter().filter(|&&a| a).count();

        let n_slack = n_ineq;
        let width = n_struct + n_slack + n_art + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut scale = 0.0f64;
        let mut art = n_struct + n_slack;
        let mut row_art = vec![None; rows];
        let mut row_sign = vec![1.0; rows];

        for r in 0..rows {
            let (row, rhs) = if r < n_ineq {
                (&lp.g[r], lp.h[r])
            } else {
                (&lp.e[r - n_ineq], lp.f[r - n_ineq])
            };
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[r] = sign;
            let base = r * width;
            for (j, &a) in row.iter().enumerate() {
                let (p, q) = var_cols[j];
                data[base + p] = sign * a;
                if let Some(q) = q {
                    data[base + q] = -sign * a;
                }
                scale = scale.max(a.abs());
            }
            if r < n_ineq {
                data[base + n_struct + r] = sign;
            }
            data[base + width - 1] = sign * rhs;
            if needs_art[r] {
                data[base + art] = 1.0;
                basis[r] = art;
                row_art[r] = Some(art);
                art += 1;
            } else {
                basis[r] = n_struct + r;
            }
        }
        Tableau {
            rows,
            width,
            n_struct,
            n_slack,
            n_art,
            data,
            basis,
            var_cols,
            row_art,
            row_sign,
            scale: scale.max(1.0),
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn art_start(&self) -> usize {
        self.n_struct + self.n_slack
    }

    /// Reduced-cost row for `cost` (indexed by tableau column) given the
    /// current basis. The last entry holds minus the objective value.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        d.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * self.width..(r + 1) * self.width];
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    fn pivot(&mut self, pr: usize, pc: usize, d: &mut [f64]) {
        let w = self.width;
        let piv = self.data[pr * w + pc];
        let inv = 1.0 / piv;
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let factor = row[pc];
            if factor != 0.0 {
                for (a, p) in row.iter_mut().zip(prow.iter()) {
                    *a -= factor * p;
                }
                row[pc] = 0.0;
            }
        }
        let factor = d[pc];
        if factor != 0.0 {
            for (a, p) in d.iter_mut().zip(prow.iter()) {
                *a -= factor * p;
            }
            d[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on columns `< limit`. Returns `false` when the
    /// objective is unbounded below.
    fn iterate(&mut self, d: &mut [f64], limit: usize) -> Result<bool, LpError> {
        let max_pivots = 50 * (self.rows + self.width) + 1000;
        let dantzig_budget = 10 * (self.rows + 10);
        for it in 0..max_pivots {
            let entering = if it < dantzig_budget {
                let mut best = None;
                let mut best_val = -OPT_TOL;
                for (j, &dj) in d[..limit].iter().enumerate() {
                    if dj < best_val {
                        best_val = dj;
                        best = Some(j);
                    }
                }
                best
            } else {
                d[..limit].iter().position(|&dj| dj < -OPT_TOL)
            };
            let Some(e) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, e);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio
                                || (ratio == lratio && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((pr, _)) = leave else {
                return Ok(false);
            };
            self.pivot(pr, e, d);
            let growth = self.rhs(pr).abs();
            if !growth.is_finite() || growth > GROWTH_LIMIT * self.scale {
                return Err(LpError::Breakdown(format!(
                    "tableau growth {growth:e} after pivot {it}"
                )));
            }
        }
        Err(LpError::Breakdown(format!(
            "pivot limit {max_pivots} exceeded"
        )))
    }

    fn solve(&mut self, lp: &LinearProgram) -> Result<LpResult, LpError> {
        let art0 = self.art_start();
        let total = self.width - 1;

        if self.n_art > 0 {
            let mut cost = vec![0.0; total];
            for c in cost.iter_mut().skip(art0) {
                *c = 1.0;
            }
            let mut d = self.reduced_costs(&cost);
            self.iterate(&mut d, total)?;
            let infeas = -d[total];
            let rhs_scale = 1.0 + lp.h.iter().chain(&lp.f).fold(0.0f64, |m, v| m.max(v.abs()));
            if infeas > FEAS_TOL * rhs_scale {
                return Ok(LpResult::Infeasible);
            }
            // drive remaining artificials out of the basis
            for r in 0..self.rows {
                if self.basis[r] >= art0 {
                    let col = (0..art0).find(|&j| self.at(r, j).abs() > 1e-7);
                    if let Some(j) = col {
                        self.pivot(r, j, &mut d);
                    }
                    // otherwise the row is redundant; the artificial stays
                    // basic at zero and is never allowed to re-enter
                }
            }
        }

        let mut cost = vec![0.0; total];
        for (j, &cj) in lp.c.iter().enumerate() {
            let (p, q) = self.var_cols[j];
            cost[p] = cj;
            if let Some(q) = q {
                cost[q] = -cj;
            }
        }
        let mut d = self.reduced_costs(&cost);
        if !self.iterate(&mut d, art0)? {
            return Ok(LpResult::Unbounded);
        }

        let mut col_val = vec![0.0; total];
        for r in 0..self.rows {
            col_val[self.basis[r]] = self.rhs(r);
        }
        let z: Vec<f64> = self
            .var_cols
            .iter()
            .map(|&(p, q)| col_val[p] - q.map_or(0.0, |q| col_val[q]))
            .collect();
        let residual = lp.residual(&z);
        let rhs_scale = 1.0 + lp.h.iter().chain(&lp.f).fold(0.0f64, |m, v| m.max(v.abs()));
        if residual > 1e-8 * rhs_scale * self.scale {
            return Err(LpError::Breakdown(format!(
                "primal residual {residual:e} at reported optimum"
            )));
        }
        let value = lp.c.iter().zip(&z).map(|(a, b)| a * b).sum();
        // reduced cost of a unit column e_r is -π_r in the sign-flipped system
        let n_ineq = lp.g.len();
        let duals = (0..self.rows)
            .map(|r| {
                if r < n_ineq {
                    -d[self.n_struct + r]
                } else {
                    let art = self.row_art[r].expect("equality rows carry artificials");
                    -d[art] * self.row_sign[r]
                }
            })
            .collect();
        Ok(LpResult::Optimal { z, value, duals })
    }
}

/// `minimize c·x  s.t.  A x = b,  x ≥ 0` with few rows and many columns.
///
/// `a` is stored row-major: row `i` occupies `a[i*cols..(i+1)*cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardForm {
    pub rows: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StandardResult {
    /// `y` satisfies `c_j − y·a_j ≥ −tol` for every column and `b·y = value`.
    Optimal {
        x: Vec<f64>,
        value: f64,
        y: Vec<f64>,
    },
    Unbounded,
    Infeasible,
}

pub fn solve_standard(sf: &StandardForm) -> Result<StandardResult, LpError> {
    StandardSolver::new(sf.rows, sf.a.clone(), sf.b.clone())?.solve(&sf.c)
}

/// Revised simplex for `A x = b, x ≥ 0` with a fixed constraint set and
/// varying objectives.
///
/// Phase one runs once at construction, starting from one artificial column
/// per row. Artificials never re-enter the basis; an artificial that cannot
/// be driven out marks a redundant row and stays basic at zero. Each call to
/// [`StandardSolver::solve`] starts phase two from that same basis, so the
/// result depends only on the inputs. Pricing and ratio-test rules match
/// [`solve_lp`]. The final basis is refactorized before the result is read.
#[derive(Debug, Clone)]
pub struct StandardSolver {
    cons: Constraints,
    start: Option<Revised>,
    b_scale: f64,
}

impl StandardSolver {
    pub fn new(rows: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self, LpError> {
        if rows == 0 {
            return Err(LpError::Dimension("standard form needs at least one row".into()));
        }
        if b.len() != rows {
            return Err(LpError::Dimension(format!(
                "{} right-hand sides for {rows} rows",
                b.len()
            )));
        }
        if a.len() % rows != 0 {
            return Err(LpError::Dimension(format!(
                "{} matrix entries do not fill {rows} rows",
                a.len()
            )));
        }
        for (name, v) in [("A", &a), ("b", &b)] {
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(LpError::NonFinite(format!("{name}[{j}]")));
            }
        }
        let cons = Constraints {
            rows,
            cols: a.len() / rows,
            a,
            b,
        };
        let b_scale = 1.0 + cons.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut rs = Revised::new(&cons);
        let zero = vec![0.0; cons.cols];
        if !rs.iterate(&cons, &zero, true, OPT_TOL)? {
            return Err(LpError::Breakdown("phase one reported unbounded".into()));
        }
        let infeas: f64 = (0..rows)
            .filter(|&i| rs.basis[i] >= cons.cols)
            .map(|i| rs.xb[i].max(0.0))
            .sum();
        let start = if infeas > FEAS_TOL * b_scale {
            None
        } else {
            let mut d = Vec::new();
            for r in 0..rows {
                if rs.basis[r] >= cons.cols {
                    let row: Vec<f64> = rs.binv[r * rows..(r + 1) * rows].to_vec();
                    cons.reduced_costs(&zero, &row, &mut d);
                    if let Some(j) = d.iter().position(|v| v.abs() > 1e-7) {
                        let w = rs.ftran(&cons, j);
                        rs.pivot(r, &w, j);
                    }
                }
            }
            Some(rs)
        };
        Ok(StandardSolver { cons, start, b_scale })
    }

    pub fn rows(&self) -> usize {
        self.cons.rows
    }

    pub fn cols(&self) -> usize {
        self.cons.cols
    }

    pub fn is_feasible(&self) -> bool {
        self.start.is_some()
    }

    pub fn solve(&self, c: &[f64]) -> Result<StandardResult, LpError> {
        let cons = &self.cons;
        if c.len() != cons.cols {
            return Err(LpError::Dimension(format!(
                "{} costs for {} columns",
                c.len(),
                cons.cols
            )));
        }
        if let Some(j) = c.iter().position(|x| !x.is_finite()) {
            return Err(LpError::NonFinite(format!("c[{j}]")));
        }
        let Some(start) = &self.start else {
            return Ok(StandardResult::Infeasible);
        };
        let mut rs = start.clone();
        let mut d = Vec::with_capacity(cons.cols);
        // reduced costs carry rounding proportional to the cost magnitude
        let tol = OPT_TOL * c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        // a few refactorize-and-resume rounds absorb drift in the inverse
        for _ in 0..4 {
            if !rs.iterate(cons, c, false, tol)? {
                return Ok(StandardResult::Unbounded);
            }
            rs.refactor(cons)?;
            let y = rs.prices(cons, c, false);
            cons.reduced_costs(c, &y, &mut d);
            if d.iter().all(|&v| v >= -tol) {
                return self.finish(&rs, c, y);
            }
        }
        Err(LpError::Breakdown("reduced costs stay negative after refactorization".into()))
    }

    fn finish(&self, rs: &Revised, c: &[f64], y: Vec<f64>) -> Result<StandardResult, LpError> {
        let cons = &self.cons;
        let mut x = vec![0.0; cons.cols];
        for (r, &j) in rs.basis.iter().enumerate() {
            if j < cons.cols {
                x[j] = rs.xb[r].max(0.0);
            } else if rs.xb[r].abs() > FEAS_TOL * self.b_scale {
                return Err(LpError::Breakdown(format!(
                    "artificial left at {:e} in a redundant row",
                    rs.xb[r]
                )));
            }
        }
        let mut residual = 0.0f64;
        for i in 0..cons.rows {
            residual = residual.max((dot(cons.row(i), &x) - cons.b[i]).abs());
        }
        if residual > 1e-8 * self.b_scale * rs.scale {
            return Err(LpError::Breakdown(format!(
                "primal residual {residual:e} at reported optimum"
            )));
        }
        let value = dot(c, &x);
        Ok(StandardResult::Optimal { x, value, y })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
struct Constraints {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Constraints {
    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.cols..(i + 1) * self.cols]
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    // c − Aᵀy, written into `d`
    fn reduced_costs(&self, cost: &[f64], y: &[f64], d: &mut Vec<f64>) {
        d.clear();
        d.extend_from_slice(cost);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (dj, aij) in d.iter_mut().zip(self.row(i)) {
                    *dj -= yi * aij;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Revised {
    rows: usize,
    // row-major basis inverse
    binv: Vec<f64>,
    basis: Vec<usize>,
    xb: Vec<f64>,
    // artificial column of row i is sign[i]·e_i, so the start basis is its own inverse
    sign: Vec<f64>,
    scale: f64,
}

impl Revised {
    fn new(cons: &Constraints) -> Self {
        let r = cons.rows;
        let sign: Vec<f64> = cons.b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut binv = vec![0.0; r * r];
        for i in 0..r {
            binv[i * r + i] = sign[i];
        }
        let xb = cons.b.iter().map(|v| v.abs()).collect();
        let scale = cons.a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        Revised {
            rows: r,
            binv,
            basis: (cons.cols..cons.cols + r).collect(),
            xb,
            sign,
            scale,
        }
    }

    // B⁻¹ a_j
    fn ftran(&self, cons: &Constraints, j: usize) -> Vec<f64> {
        let r = self.rows;
        (0..r)
            .map(|i| (0..r).map(|k| self.binv[i * r + k] * cons.at(k, j)).sum())
            .collect()
    }

    // Simplex multipliers for the given costs; artificials cost 1 in phase one
    // and 0 afterwards.
    fn prices(&self, cons: &Constraints, cost: &[f64], phase1: bool) -> Vec<f64> {
        let r = self.rows;
        let mut y = vec![0.0; r];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = if j < cons.cols {
                cost[j]
            } else if phase1 {
                1.0
            } else {
                0.0
            };
            if cb != 0.0 {
                for (yk, bk) in y.iter_mut().zip(&self.binv[i * r..(i + 1) * r]) {
                    *yk += cb * bk;
                }
            }
        }
        y
    }

    fn pivot(&mut self, pr: usize, w: &[f64], entering: usize) {
        let r = self.rows;
        let inv = 1.0 / w[pr];
        for v in &mut self.binv[pr * r..(pr + 1) * r] {
            *v *= inv;
        }
        self.xb[pr] *= inv;
        let prow: Vec<f64> = self.binv[pr * r..(pr + 1) * r].to_vec();
        let xp = self.xb[pr];
        for i in 0..r {
            if i != pr && w[i] != 0.0 {
                let f = w[i];
                for (a, p) in self.binv[i * r..(i + 1) * r].iter_mut().zip(&prow) {
                    *a -= f * p;
                }
                self.xb[i] -= f * xp;
            }
        }
        self.basis[pr] = entering;
    }

    // Bland ordering with artificials ranked first, which is valid because
    // they never re-enter.
    fn rank(&self, j: usize, n: usize) -> usize {
        if j >= n {
            j - n
        } else {
            j + self.rows
        }
    }

    fn iterate(&mut self, cons: &Constraints, cost: &[f64], phase1: bool, tol: f64) -> Result<bool, LpError> {
        let n = cons.cols;
        let max_pivots = 50 * (self.rows + n) + 1000;
        let dantzig_budget = 10 * (self.rows + 10);
        let mut d = Vec::with_capacity(n);
        for it in 0..max_pivots {
            let y = self.prices(cons, cost, phase1);
            cons.reduced_costs(cost, &y, &mut d);
            let entering = if it < dantzig_budget {
                let mut best = None;
                let mut best_val = -tol;
                for (j, &dj) in d.iter().enumerate() {
                    if dj < best_val {
                        best_val = dj;
                        best = Some(j);
                    }
                }
                best
            } else {
                d.iter().position(|&dj| dj < -tol)
            };
            let Some(e) = entering else {
                return Ok(true);
            };
            let w = self.ftran(cons, e);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                if w[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / w[i];
                    let better = match leave {
                        None => true,
                        Some((l, lr)) => {
                            ratio < lr
                                || (ratio == lr
                                    && self.rank(self.basis[i], n) < self.rank(self.basis[l], n))
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((pr, _)) = leave else {
                return Ok(false);
            };
            self.pivot(pr, &w, e);
            let growth = self.xb[pr].abs();
            if !growth.is_finite() || growth > GROWTH_LIMIT * self.scale {
                return Err(LpError::Breakdown(format!(
                    "basis growth {growth:e} after pivot {it}"
                )));
            }
        }
        Err(LpError::Breakdown(format!("pivot limit {max_pivots} exceeded")))
    }

    fn refactor(&mut self, cons: &Constraints) -> Result<(), LpError> {
        let r = self.rows;
        let n = cons.cols;
        let bmat = DMatrix::from_fn(r, r, |i, k| {
            let j = self.basis[k];
            if j < n {
                cons.at(i, j)
            } else if i == j - n {
                self.sign[i]
            } else {
                0.0
            }
        });
        let inv = bmat
            .try_inverse()
            .ok_or_else(|| LpError::Breakdown("singular basis".into()))?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Breakdown("singular basis".into()));
        }
        for i in 0..r {
            for k in 0..r {
                self.binv[i * r + k] = inv[(i, k)];
            }
        }
        let xb = &inv * DVector::from_column_slice(&cons.b);
        self.xb = xb.iter().copied().collect();
        Ok(())
    }
}
