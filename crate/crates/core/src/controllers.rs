//! Feedback laws read off a certificate, and controllers with memory.
//!
//! [`MemorylessController`] and [`ModeDependentController`] evaluate the
//! argmin feedback of a converged certificate. [`SectorLinearController2D`]
//! interpolates that feedback linearly between adjacent ball vertices.
//! Controllers with memory implement [`MemoryController`]; the combinators
//! [`lift_memoryless`], [`scale_controller`] and [`sum_controller`] build new
//! ones from old.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::bellman::{BellmanOperator, Certificate};
use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::norm::BalancedPolytopeNorm;

/// How a [`MemorylessController`] evaluates `Φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackStrategy {
    /// Solve the argmin LP at every query.
    OnlineLp,
    /// Interpolate precomputed vertex gains (planar certificates only).
    SectorLinear2D,
}

fn usable(cert: &Certificate, system: &SwitchedSystem, mode_dependent: bool) -> Result<()> {
    cert.check_system(system)?;
    cert.require_converged()?;
    if cert.mode_dependent != mode_dependent {
        let (have, want) = if cert.mode_dependent {
            ("mode-dependent", "mode-independent")
        } else {
            ("mode-independent", "mode-dependent")
        };
        return Err(Error::Certificate(format!(
            "certificate is {have}, a {want} one is required"
        )));
    }
    Ok(())
}

/// The homogeneous feedback `Φ` of a converged mode-independent certificate.
#[derive(Debug, Clone)]
pub struct MemorylessController {
    op: Arc<BellmanOperator>,
    strategy: FeedbackStrategy,
    sector: Option<Arc<SectorLinearController2D>>,
}

impl MemorylessController {
    pub fn new(cert: &Certificate, system: &SwitchedSystem, strategy: FeedbackStrategy) -> Result<Self> {
        usable(cert, system, false)?;
        let op = Arc::new(BellmanOperator::new(&cert.norm, system)?);
        let sector = match strategy {
            FeedbackStrategy::OnlineLp => None,
            FeedbackStrategy::SectorLinear2D => Some(Arc::new(sector_from_operator(&op)?)),
        };
        Ok(MemorylessController { op, strategy, sector })
    }

    /// The default, LP-evaluated controller.
    pub fn online(cert: &Certificate, system: &SwitchedSystem) -> Result<Self> {
        MemorylessController::new(cert, system, FeedbackStrategy::OnlineLp)
    }

    pub fn strategy(&self) -> FeedbackStrategy {
        self.strategy
    }

    pub fn norm(&self) -> &BalancedPolytopeNorm {
        self.op.norm()
    }

    pub fn system(&self) -> &SwitchedSystem {
        self.op.system()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        match &self.sector {
            Some(sector) => sector.eval(x),
            None => self.op.feedback(x),
        }
    }
}

/// The homogeneous per-mode feedback `Φ_d` of a converged mode-dependent
/// certificate.
#[derive(Debug, Clone)]
pub struct ModeDependentController {
    op: Arc<BellmanOperator>,
}

impl ModeDependentController {
    pub fn new(cert: &Certificate, system: &SwitchedSystem) -> Result<Self> {
        usable(cert, system, true)?;
        Ok(ModeDependentController {
            op: Arc::new(BellmanOperator::new(&cert.norm, system)?),
        })
    }

    pub fn norm(&self) -> &BalancedPolytopeNorm {
        self.op.norm()
    }

    pub fn system(&self) -> &SwitchedSystem {
        self.op.system()
    }

    pub fn eval(&self, mode: usize, x: &[f64]) -> Result<DVector<f64>> {
        self.op.feedback_mode(mode, x)
    }
}

/// `Φ(x)` for a converged mode-independent certificate.
pub fn extract_feedback(cert: &Certificate, system: &SwitchedSystem, x: &[f64]) -> Result<DVector<f64>> {
    usable(cert, system, false)?;
    BellmanOperator::new(&cert.norm, system)?.feedback(x)
}

/// `Φ_d(mode, x)` for a converged mode-dependent certificate.
pub fn extract_feedback_dependent(
    cert: &Certificate,
    system: &SwitchedSystem,
    mode: usize,
    x: &[f64],
) -> Result<DVector<f64>> {
    usable(cert, system, true)?;
    BellmanOperator::new(&cert.norm, system)?.feedback_mode(mode, x)
}

/// Piecewise-linear feedback on the cones spanned by adjacent vertices of a
/// planar certificate ball.
///
/// With the full polygon `p_0, …, p_{2k−1}` in counter-clockwise order and
/// gains `u_j = Φ(p_j)`, a state `x = α p_j + β p_{j+1}` with `α, β ≥ 0` is
/// mapped to `α u_j + β u_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorLinearController2D {
    vertices: Vec<[f64; 2]>,
    angles: Vec<f64>,
    gains: Vec<DVector<f64>>,
    m: usize,
}

/// One cone of a [`SectorLinearController2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub index: usize,
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub up: DVector<f64>,
    pub uq: DVector<f64>,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn angle(p: [f64; 2]) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + 2.0 * std::f64::consts::PI
    } else {
        t
    }
}

fn sector_from_operator(op: &BellmanOperator) -> Result<SectorLinearController2D> {
    let norm = op.norm();
    if norm.dim() != 2 {
        return Err(Error::Controller(format!(
            "sector controller needs a planar certificate, found dimension {}",
            norm.dim()
        )));
    }
    let vertices = norm.full_polygon()?;
    let k = norm.vertices().len();
    let mut gains: Vec<DVector<f64>> = norm
        .vertices()
        .iter()
        .map(|p| op.feedback(p))
        .collect::<Result<_>>()?;
    // Φ is odd by construction; negating keeps the antipodal gains exact
    let negated: Vec<DVector<f64>> = gains.iter().map(|u| -u).collect();
    gains.extend(negated);
    debug_assert_eq!(gains.len(), 2 * k);
    let angles = vertices.iter().map(|&p| angle(p)).collect();
    Ok(SectorLinearController2D {
        vertices,
        angles,
        gains,
        m: op.system().m(),
    })
}

/// Builds the sector controller of a converged planar mode-independent
/// certificate.
pub fn build_sector_controller_2d(cert: &Certificate, system: &SwitchedSystem) -> Result<SectorLinearController2D> {
    usable(cert, system, false)?;
    if system.n() != 2 {
        return Err(Error::Controller(format!(
            "sector controller needs n = 2, system has n = {}",
            system.n()
        )));
    }
    sector_from_operator(&BellmanOperator::new(&cert.norm, system)?)
}

impl SectorLinearController2D {
    /// Full polygon, counter-clockwise from angle 0.
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// `u_j` for each vertex of [`Self::vertices`].
    pub fn gains(&self) -> &[DVector<f64>] {
        &self.gains
    }

    pub fn num_sectors(&self) -> usize {
        self.vertices.len()
    }

    pub fn sector(&self, j: usize) -> Sector {
        let s = self.vertices.len();
        Sector {
            index: j,
            p: self.vertices[j],
            q: self.vertices[(j + 1) % s],
            up: self.gains[j].clone(),
            uq: self.gains[(j + 1) % s].clone(),
        }
    }

    pub fn sectors(&self) -> impl Iterator<Item = Sector> + '_ {
        (0..self.num_sectors()).map(|j| self.sector(j))
    }

    /// Sector index and coefficients with `x = α p_j + β p_{j+1}`, or `None`
    /// for `x = 0`.
    pub fn decompose(&self, x: &[f64]) -> Result<Option<(usize, f64, f64)>> {
        if x.len() != 2 {
            return Err(Error::Dimension {
                path: "x".into(),
                detail: format!("expected 2 coordinates, found {}", x.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x".into()));
        }
        if x[0] == 0.0 && x[1] == 0.0 {
            return Ok(None);
        }
        let s = self.vertices.len();
        let theta = angle([x[0], x[1]]);
        let after = self.angles.partition_point(|&a| a <= theta);
        let j = (after + s - 1) % s;
        let (p, q) = (self.vertices[j], self.vertices[(j + 1) % s]);
        let det = cross(p, q);
        if !(det > 0.0) {
            return Err(Error::Controller(format!("sector {j} is degenerate")));
        }
        let xa = [x[0], x[1]];
        let alpha = cross(xa, q) / det;
        let beta = cross(p, xa) / det;
        if alpha < -1e-9 * (alpha.abs() + beta.abs()) || beta < -1e-9 * (alpha.abs() + beta.abs()) {
            return Err(Error::Controller(format!(
                "sector decomposition failed at sector {j} (alpha {alpha:e}, beta {beta:e})"
            )));
        }
        Ok(Some((j, alpha, beta)))
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self.decompose(x)? {
            None => Ok(DVector::zeros(self.m)),
            Some((j, alpha, beta)) => {
                let s = self.vertices.len();
                Ok(&self.gains[j] * alpha + &self.gains[(j + 1) % s] * beta)
            }
        }
    }
}

/// Information available to a controller with memory: the current mode is
/// either withheld (`H_−`) or revealed (`H`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryKind {
    /// Sees `x(0..=k)` and `σ(0..k)`.
    CurrentModeIndependent,
    /// Sees `x(0..=k)` and `σ(0..=k)`.
    CurrentModeDependent,
}

impl MemoryKind {
    /// Modes visible at step `k`.
    pub fn visible_modes(self, k: usize) -> usize {
        match self {
            MemoryKind::CurrentModeIndependent => k,
            MemoryKind::CurrentModeDependent => k + 1,
        }
    }
}

/// A feedback law `Ψ` on state and mode histories.
///
/// Implementations may keep internal state, but repeated queries at the same
/// step must be allowed: an adversary probes a current-mode-dependent
/// controller once per candidate mode.
pub trait MemoryController: Send {
    fn kind(&self) -> MemoryKind;

    fn input_dim(&self) -> usize;

    /// `states = x(0..=k)`; `modes` holds `kind().visible_modes(k)` entries.
    fn control(&mut self, states: &[DVector<f64>], modes: &[usize]) -> Result<DVector<f64>>;
}

impl fmt::Debug for dyn MemoryController {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryController")
            .field("kind", &self.kind())
            .field("input_dim", &self.input_dim())
            .finish()
    }
}

/// Step index of a history, after checking its shape against `kind`.
pub fn history_step(kind: MemoryKind, states: &[DVector<f64>], modes: &[usize]) -> Result<usize> {
    let Some(k) = states.len().checked_sub(1) else {
        return Err(Error::Controller("empty state history".into()));
    };
    let want = kind.visible_modes(k);
    if modes.len() != want {
        return Err(Error::Controller(format!(
            "{kind:?} controller at step {k} expects {want} modes, got {}",
            modes.len()
        )));
    }
    Ok(k)
}

fn check_output(u: DVector<f64>, m: usize) -> Result<DVector<f64>> {
    if u.len() != m {
        return Err(Error::Controller(format!(
            "controller returned {} inputs, expected {m}",
            u.len()
        )));
    }
    Ok(u)
}

/// A memoryless feedback of either kind.
#[derive(Debug, Clone)]
pub enum StaticFeedback {
    Independent(MemorylessController),
    Dependent(ModeDependentController),
}

impl From<MemorylessController> for StaticFeedback {
    fn from(c: MemorylessController) -> Self {
        StaticFeedback::Independent(c)
    }
}

impl From<ModeDependentController> for StaticFeedback {
    fn from(c: ModeDependentController) -> Self {
        StaticFeedback::Dependent(c)
    }
}

/// A memoryless feedback viewed as a controller with memory that ignores
/// everything but the current state (and current mode).
#[derive(Debug, Clone)]
pub struct LiftedController {
    inner: StaticFeedback,
}

pub fn lift_memoryless(c: impl Into<StaticFeedback>) -> LiftedController {
    LiftedController { inner: c.into() }
}

impl MemoryController for LiftedController {
    fn kind(&self) -> MemoryKind {
        match self.inner {
            StaticFeedback::Independent(_) => MemoryKind::CurrentModeIndependent,
            StaticFeedback::Dependent(_) => MemoryKind::CurrentModeDependent,
        }
    }

    fn input_dim(&self) -> usize {
        match &self.inner {
            StaticFeedback::Independent(c) => c.system().m(),
            StaticFeedback::Dependent(c) => c.system().m(),
        }
    }

    fn control(&mut self, states: &[DVector<f64>], modes: &[usize]) -> Result<DVector<f64>> {
        let k = history_step(self.kind(), states, modes)?;
        let x = states[k].as_slice();
        match &self.inner {
            StaticFeedback::Independent(c) => c.eval(x),
            StaticFeedback::Dependent(c) => c.eval(modes[k], x),
        }
    }
}

/// A controller given by a closure over the histories.
pub struct FnController<F> {
    kind: MemoryKind,
    m: usize,
    f: F,
}

/// Wraps `f(states, modes) -> u` as a [`MemoryController`].
pub fn from_fn<F>(kind: MemoryKind, m: usize, f: F) -> FnController<F>
where
    F: FnMut(&[DVector<f64>], &[usize]) -> DVector<f64> + Send,
{
    FnController { kind, m, f }
}

impl<F> MemoryController for FnController<F>
where
    F: FnMut(&[DVector<f64>], &[usize]) -> DVector<f64> + Send,
{
    fn kind(&self) -> MemoryKind {
        self.kind
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn control(&mut self, states: &[DVector<f64>], modes: &[usize]) -> Result<DVector<f64>> {
        history_step(self.kind, states, modes)?;
        check_output((self.f)(states, modes), self.m)
    }
}

/// `Ψ′(y_k, …, y_0; σ) = λ Ψ(y_k/λ, …, y_0/λ; σ)`.
pub struct ScaledController {
    inner: Box<dyn MemoryController>,
    lambda: f64,
}

pub fn scale_controller(psi: Box<dyn MemoryController>, lambda: f64) -> Result<ScaledController> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::Controller(format!(
            "scaling factor must be finite and nonzero, got {lambda}"
        )));
    }
    Ok(ScaledController { inner: psi, lambda })
}

impl MemoryController for ScaledController {
    fn kind(&self) -> MemoryKind {
        self.inner.kind()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn control(&mut self, states: &[DVector<f64>], modes: &[usize]) -> Result<DVector<f64>> {
        history_step(self.kind(), states, modes)?;
        let scaled: Vec<DVector<f64>> = states.iter().map(|y| y / self.lambda).collect();
        let u = self.inner.control(&scaled, modes)?;
        check_output(u * self.lambda, self.input_dim())
    }
}

struct Virtual {
    psi: Box<dyn MemoryController>,
    states: Vec<DVector<f64>>,
}

/// The sum construction: replays `Ψ₁` along the trajectory from `z₁` and
/// `Ψ₂` along the trajectory from `z₂`, both driven by the observed modes,
/// and outputs the sum of the two inputs. Observed states are ignored.
pub struct SumController {
    system: SwitchedSystem,
    parts: [Virtual; 2],
    // modes already used to advance the virtual trajectories
    applied: Vec<usize>,
    kind: MemoryKind,
}

pub fn sum_controller(
    psi1: Box<dyn MemoryController>,
    z1: DVector<f64>,
    psi2: Box<dyn MemoryController>,
    z2: DVector<f64>,
    system: &SwitchedSystem,
) -> Result<SumController> {
    for (name, z, psi) in [("z1", &z1, &psi1), ("z2", &z2, &psi2)] {
        if z.len() != system.n() {
            return Err(Error::Dimension {
                path: name.into(),
                detail: format!("expected {} coordinates, found {}", system.n(), z.len()),
            });
        }
        if psi.input_dim() != system.m() {
            return Err(Error::Dimension {
                path: name.replace('z', "psi"),
                detail: format!("controller has {} inputs, system has m = {}", psi.input_dim(), system.m()),
            });
        }
    }
    let kind = if psi1.kind() == MemoryKind::CurrentModeDependent
        || psi2.kind() == MemoryKind::CurrentModeDependent
    {
        MemoryKind::CurrentModeDependent
    } else {
        MemoryKind::CurrentModeIndependent
    };
    Ok(SumController {
        system: system.clone(),
        parts: [
            Virtual { psi: psi1, states: vec![z1] },
            Virtual { psi: psi2, states: vec![z2] },
        ],
        applied: Vec::new(),
        kind,
    })
}

impl Virtual {
    fn input_at(&mut self, t: usize, modes: &[usize]) -> Result<DVector<f64>> {
        let visible = self.psi.kind().visible_modes(t);
        self.psi.control(&self.states[..=t], &modes[..visible])
    }
}

impl MemoryController for SumController {
    fn kind(&self) -> MemoryKind {
        self.kind
    }

    fn input_dim(&self) -> usize {
        self.system.m()
    }

    fn control(&mut self, states: &[DVector<f64>], modes: &[usize]) -> Result<DVector<f64>> {
        let k = history_step(self.kind, states, modes)?;
        let done = self.applied.len();
        if k < done {
            return Err(Error::Controller(format!(
                "sum controller queried at step {k} after reaching step {done}"
            )));
        }
        if modes[..done] != self.applied[..] {
            return Err(Error::Controller(
                "mode history differs from the one already replayed".into(),
            ));
        }
        for t in done..k {
            let sigma = modes[t];
            if sigma >= self.system.num_modes() {
                return Err(Error::Controller(format!("mode index {sigma} out of range")));
            }
            for part in &mut self.parts {
                let u = part.input_at(t, modes)?;
                let next = self.system.step(sigma, &part.states[t], &u);
                part.states.push(next);
            }
            self.applied.push(sigma);
        }
        let u1 = self.parts[0].input_at(k, modes)?;
        let u2 = self.parts[1].input_at(k, modes)?;
        check_output(u1 + u2, self.system.m())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{value_iteration, SynthesisConfig};
    use nalgebra::DMatrix;

    fn scalar_system(entries: &[(f64, f64)]) -> SwitchedSystem {
        SwitchedSystem::new(
            1,
            1,
            entries
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    (
                        format!("m{i}"),
                        DMatrix::from_element(1, 1, a),
                        DMatrix::from_element(1, 1, b),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_deadbeat_feedback() {
        for a in [0.5, 2.0, -3.0] {
            let sys = scalar_system(&[(a, 1.0)]);
            let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
            for x in [1.0, -3.0, 0.25] {
                let u = extract_feedback(&cert, &sys, &[x]).unwrap();
                assert!((u[0] + a * x).abs() < 1e-9, "a={a} x={x} u={}", u[0]);
            }
            assert_eq!(extract_feedback(&cert, &sys, &[0.0]).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn per_mode_deadbeat_feedback() {
        let sys = scalar_system(&[(2.0, 1.0), (-2.0, 1.0)]);
        let cert = value_iteration(&sys, &SynthesisConfig::default().mode_dependent(true)).unwrap();
        for x in [1.0, -0.5, 4.0] {
            let u0 = extract_feedback_dependent(&cert, &sys, 0, &[x]).unwrap();
            let u1 = extract_feedback_dependent(&cert, &sys, 1, &[x]).unwrap();
            assert!((u0[0] + 2.0 * x).abs() < 1e-9);
            assert!((u1[0] - 2.0 * x).abs() < 1e-9);
        }
        assert_eq!(extract_feedback_dependent(&cert, &sys, 1, &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn wrong_kind_or_status_is_rejected() {
        let sys = scalar_system(&[(2.0, 1.0), (-2.0, 1.0)]);
        let dependent = value_iteration(&sys, &SynthesisConfig::default().mode_dependent(true)).unwrap();
        assert!(matches!(extract_feedback(&dependent, &sys, &[1.0]), Err(Error::Certificate(_))));
        let diverged = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        assert!(matches!(
            extract_feedback_dependent(&diverged, &sys, 0, &[1.0]),
            Err(Error::Certificate(_))
        ));
        let other = scalar_system(&[(0.5, 1.0)]);
        assert!(matches!(
            ModeDependentController::new(&dependent, &other),
            Err(Error::Certificate(_))
        ));
    }

    #[test]
    fn lift_kinds() {
        let sys = scalar_system(&[(0.5, 1.0)]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let lifted = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        assert_eq!(lifted.kind(), MemoryKind::CurrentModeIndependent);
        let sys2 = scalar_system(&[(2.0, 1.0), (-2.0, 1.0)]);
        let cert2 = value_iteration(&sys2, &SynthesisConfig::default().mode_dependent(true)).unwrap();
        let lifted2 = lift_memoryless(ModeDependentController::new(&cert2, &sys2).unwrap());
        assert_eq!(lifted2.kind(), MemoryKind::CurrentModeDependent);
    }

    #[test]
    fn history_shapes_are_enforced() {
        let states = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 0.5)];
        assert_eq!(history_step(MemoryKind::CurrentModeIndependent, &states, &[0]).unwrap(), 1);
        assert_eq!(history_step(MemoryKind::CurrentModeDependent, &states, &[0, 1]).unwrap(), 1);
        assert!(history_step(MemoryKind::CurrentModeIndependent, &states, &[0, 1]).is_err());
        assert!(history_step(MemoryKind::CurrentModeDependent, &states, &[0]).is_err());
        assert!(history_step(MemoryKind::CurrentModeDependent, &[], &[]).is_err());
    }

    #[test]
    fn zero_scale_is_rejected() {
        let c = from_fn(MemoryKind::CurrentModeIndependent, 1, |_, _| DVector::zeros(1));
        assert!(scale_controller(Box::new(c), 0.0).is_err());
    }

    #[test]
    fn sum_controller_rejects_rewinding_and_foreign_histories() {
        let sys = scalar_system(&[(1.0, 1.0), (-1.0, 1.0)]);
        let zero = || Box::new(from_fn(MemoryKind::CurrentModeIndependent, 1, |_, _| DVector::zeros(1)));
        let mut sum = sum_controller(zero(), DVector::from_element(1, 1.0), zero(), DVector::zeros(1), &sys).unwrap();
        let y = |k: usize| vec![DVector::zeros(1); k + 1];
        sum.control(&y(2), &[0, 1]).unwrap();
        // same step again is allowed
        sum.control(&y(2), &[0, 1]).unwrap();
        assert!(sum.control(&y(1), &[0]).is_err());
        assert!(sum.control(&y(3), &[1, 1, 0]).is_err());
    }

    #[test]
    fn sum_controller_checks_dimensions() {
        let sys = scalar_system(&[(1.0, 1.0)]);
        let zero = || Box::new(from_fn(MemoryKind::CurrentModeIndependent, 1, |_, _| DVector::zeros(1)));
        assert!(sum_controller(zero(), DVector::zeros(2), zero(), DVector::zeros(1), &sys).is_err());
        let wide = Box::new(from_fn(MemoryKind::CurrentModeIndependent, 2, |_, _| DVector::zeros(2)));
        assert!(sum_controller(zero(), DVector::zeros(1), wide, DVector::zeros(1), &sys).is_err());
    }

    #[test]
    fn closure_output_dimension_is_checked() {
        let mut c = from_fn(MemoryKind::CurrentModeIndependent, 2, |_, _| DVector::zeros(1));
        assert!(c.control(&[DVector::zeros(1)], &[]).is_err());
    }
}
