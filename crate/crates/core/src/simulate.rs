//! Closed-loop simulation `x(k+1) = A_σ(k) x(k) + B_σ(k) u(k) + w(k)` and
//! estimation of the exponential-stability constants from runs.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bellman::Certificate;
use crate::controllers::{MemoryController, MemoryKind};
use crate::error::{Error, Result};
use crate::model::{SwitchedSystem, Trajectory};
use crate::norm::BalancedPolytopeNorm;
use crate::signal::SwitchingSignal;

/// States with norm below this are skipped when forming ratios.
pub const RATIO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub x0: DVector<f64>,
    pub horizon: usize,
    pub signal: SwitchingSignal,
    /// Radius of the Euclidean ball the disturbance is drawn from; 0 is
    /// nominal.
    pub disturbance: f64,
    pub disturbance_seed: u64,
}

impl SimulationSpec {
    pub fn nominal(x0: DVector<f64>, horizon: usize, signal: SwitchingSignal) -> Self {
        SimulationSpec {
            x0,
            horizon,
            signal,
            disturbance: 0.0,
            disturbance_seed: 0,
        }
    }

    fn validate(&self, system: &SwitchedSystem) -> Result<()> {
        if self.x0.len() != system.n() {
            return Err(Error::Dimension {
                path: "x0".into(),
                detail: format!("expected {} coordinates, found {}", system.n(), self.x0.len()),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.disturbance >= 0.0 && self.disturbance.is_finite()) {
            return Err(Error::Config(format!(
                "disturbance bound must be finite and non-negative, got {}",
                self.disturbance
            )));
        }
        self.signal.validate(system.num_modes())
    }
}

// Uniform samples from the Euclidean ball of radius δ: Gaussian direction,
// radius δ·U^{1/n}.
struct DisturbanceSource {
    rng: ChaCha8Rng,
    delta: f64,
    n: usize,
}

impl DisturbanceSource {
    fn next(&mut self) -> DVector<f64> {
        loop {
            let g: DVector<f64> = DVector::from_fn(self.n, |_, _| self.rng.sample(StandardNormal));
            let norm = g.norm();
            if norm > 0.0 {
                let u: f64 = self.rng.random();
                let r = self.delta * u.powf(1.0 / self.n as f64);
                return g * (r / norm);
            }
        }
    }
}

fn greedy_mode(
    norm: &BalancedPolytopeNorm,
    candidates: impl Iterator<Item = (usize, DVector<f64>)>,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, next) in candidates {
        let v = norm.eval_vec(&next)?;
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Signal("no modes to choose from".into()))
}

/// Runs the closed loop for `spec.horizon` steps.
///
/// A current-mode-independent controller is queried before `σ(k)` is
/// chosen; a current-mode-dependent one after, with `σ(k)` appended to its
/// mode history. An adversarial signal sees `u(k)` for the former and, for
/// the latter, compares the controller's answers for every candidate mode.
/// When `norm` is given the trajectory carries `V(x(k))`.
pub fn simulate(
    system: &SwitchedSystem,
    controller: &mut dyn MemoryController,
    spec: &SimulationSpec,
    norm: Option<&BalancedPolytopeNorm>,
) -> Result<Trajectory> {
    spec.validate(system)?;
    if controller.input_dim() != system.m() {
        return Err(Error::Controller(format!(
            "controller has {} inputs, system has m = {}",
            controller.input_dim(),
            system.m()
        )));
    }
    let kind = controller.kind();
    if let SwitchingSignal::Adversarial { norm: adv, kind: adv_kind } = &spec.signal {
        if *adv_kind != kind {
            return Err(Error::Signal(format!(
                "adversarial signal built for a {adv_kind:?} controller, got {kind:?}"
            )));
        }
        if adv.dim() != system.n() {
            return Err(Error::Signal("adversarial norm dimension differs from the system".into()));
        }
    }
    let n_modes = system.num_modes();
    let mut disturbance = (spec.disturbance > 0.0).then(|| DisturbanceSource {
        rng: ChaCha8Rng::seed_from_u64(spec.disturbance_seed),
        delta: spec.disturbance,
        n: system.n(),
    });

    let mut states = vec![spec.x0.clone()];
    let mut inputs = Vec::with_capacity(spec.horizon);
    let mut modes: Vec<usize> = Vec::with_capacity(spec.horizon + 1);
    let mut ws = Vec::new();
    for k in 0..spec.horizon {
        let x = &states[k];
        let (sigma, u) = match (&spec.signal, kind) {
            (SwitchingSignal::Adversarial { norm: adv, .. }, MemoryKind::CurrentModeIndependent) => {
                let u = controller.control(&states, &modes)?;
                let sigma = greedy_mode(adv, (0..n_modes).map(|i| (i, system.step(i, x, &u))))?;
                (sigma, u)
            }
            (SwitchingSignal::Adversarial { norm: adv, .. }, MemoryKind::CurrentModeDependent) => {
                let mut answers = Vec::with_capacity(n_modes);
                for i in 0..n_modes {
                    modes.push(i);
                    let u = controller.control(&states, &modes);
                    modes.pop();
                    answers.push(u?);
                }
                let sigma = greedy_mode(
                    adv,
                    answers.iter().enumerate().map(|(i, u)| (i, system.step(i, x, u))),
                )?;
                modes.push(sigma);
                // the final query with the chosen mode is the one that counts
                let u = controller.control(&states, &modes)?;
                modes.pop();
                (sigma, u)
            }
            (signal, MemoryKind::CurrentModeIndependent) => {
                let u = controller.control(&states, &modes)?;
                (signal.mode_at(k, n_modes)?, u)
            }
            (signal, MemoryKind::CurrentModeDependent) => {
                let sigma = signal.mode_at(k, n_modes)?;
                modes.push(sigma);
                let u = controller.control(&states, &modes);
                modes.pop();
                (sigma, u?)
            }
        };
        if u.len() != system.m() {
            return Err(Error::Simulation {
                step: k,
                detail: format!("controller returned {} inputs, expected {}", u.len(), system.m()),
            });
        }
        let mut next = system.step(sigma, x, &u);
        if let Some(src) = disturbance.as_mut() {
            let w = src.next();
            next += &w;
            ws.push(w);
        }
        if next.iter().any(|v| !v.is_finite()) || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                step: k,
                detail: "state or input is no longer finite".into(),
            });
        }
        modes.push(sigma);
        inputs.push(u);
        states.push(next);
    }
    let v_values = match norm {
        Some(nm) => Some(states.iter().map(|x| nm.eval_vec(x)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    Ok(Trajectory {
        states,
        inputs,
        modes,
        v_values,
        disturbances: disturbance.map(|_| ws),
    })
}

/// The greedy adversary for a certificate's norm.
pub fn adversarial_signal(cert: &Certificate, kind: MemoryKind) -> Result<SwitchingSignal> {
    cert.require_converged()?;
    Ok(SwitchingSignal::Adversarial {
        norm: cert.norm.clone(),
        kind,
    })
}

/// Empirical constants of `‖x(k)‖ ≤ M γ^k ‖x(0)‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct UesEstimate {
    /// Largest observed one-step ratio `V(x(k+1)) / V(x(k))`.
    pub gamma_hat: f64,
    /// `c2 / c1` of the certificate, with `c1 = 1`.
    pub m_hat: f64,
    /// Steps with `‖x(k)‖ > M γ̂^k ‖x(0)‖ (1 + 1e−6)`.
    pub bound_violations: usize,
    pub steps: usize,
}

pub fn estimate_ues(trajectories: &[Trajectory], cert: &Certificate) -> Result<UesEstimate> {
    if trajectories.is_empty() {
        return Err(Error::Empty("no trajectories to estimate from".into()));
    }
    let m_hat = cert
        .c2
        .ok_or_else(|| Error::Certificate("certificate carries no c2".into()))?;
    let mut gamma_hat = 0.0f64;
    let mut steps = 0;
    for (r, t) in trajectories.iter().enumerate() {
        t.check_lengths()?;
        if t.disturbances.is_some() {
            return Err(Error::Config(format!("trajectory {r} is disturbed")));
        }
        let v = t
            .v_values
            .as_ref()
            .ok_or_else(|| Error::Config(format!("trajectory {r} carries no norm values")))?;
        for k in 0..t.horizon() {
            if v[k] >= RATIO_FLOOR {
                gamma_hat = gamma_hat.max(v[k + 1] / v[k]);
            }
        }
        steps += t.horizon();
    }
    let mut bound_violations = 0;
    for t in trajectories {
        let x0 = t.states[0].norm();
        for (k, x) in t.states.iter().enumerate() {
            let bound = m_hat * gamma_hat.powi(k as i32) * x0 * (1.0 + 1e-6);
            if x.norm() > bound {
                bound_violations += 1;
            }
        }
    }
    Ok(UesEstimate {
        gamma_hat,
        m_hat,
        bound_violations,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{value_iteration, SynthesisConfig};
    use crate::controllers::{from_fn, lift_memoryless, MemorylessController, ModeDependentController};
    use nalgebra::DMatrix;

    fn scalar_system(entries: &[(f64, Option<f64>)]) -> SwitchedSystem {
        let m = usize::from(entries[0].1.is_some());
        SwitchedSystem::new(
            1,
            m,
            entries
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    (
                        format!("m{i}"),
                        DMatrix::from_element(1, 1, a),
                        DMatrix::from_iterator(1, m, b),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn origin_is_an_equilibrium() {
        let sys = scalar_system(&[(0.5, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let mut c = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        let spec = SimulationSpec::nominal(DVector::zeros(1), 5, SwitchingSignal::RandomSeeded(1));
        let t = simulate(&sys, &mut c, &spec, None).unwrap();
        assert!(t.states.iter().all(|x| x[0] == 0.0));
        assert!(t.inputs.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn scalar_deadbeat_reaches_zero_in_one_step() {
        let sys = scalar_system(&[(-3.0, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let mut c = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        let spec = SimulationSpec::nominal(DVector::from_element(1, 5.0), 6, SwitchingSignal::Periodic(vec![0]));
        let t = simulate(&sys, &mut c, &spec, Some(&cert.norm)).unwrap();
        assert!(t.states[1..].iter().all(|x| x[0].abs() < 1e-12));
        assert_eq!(t.v_values.as_ref().unwrap().len(), 7);
    }

    #[test]
    fn mode_dependent_deadbeat_under_random_switching() {
        let sys = scalar_system(&[(2.0, Some(1.0)), (-2.0, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default().mode_dependent(true)).unwrap();
        let mut c = lift_memoryless(ModeDependentController::new(&cert, &sys).unwrap());
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 20, SwitchingSignal::RandomSeeded(9));
        let t = simulate(&sys, &mut c, &spec, None).unwrap();
        assert!(t.states[1..].iter().all(|x| x[0].abs() < 1e-12));
        assert!(t.modes.contains(&0) && t.modes.contains(&1));
    }

    #[test]
    fn information_pattern_is_enforced() {
        let sys = scalar_system(&[(0.5, Some(1.0)), (0.2, Some(1.0))]);
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        let mut c = from_fn(MemoryKind::CurrentModeIndependent, 1, move |xs, ms| {
            log.lock().unwrap().push((xs.len(), ms.len()));
            DVector::zeros(1)
        });
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 3, SwitchingSignal::Periodic(vec![1, 0]));
        simulate(&sys, &mut c, &spec, None).unwrap();
        assert_eq!(*seen.lock().unwrap(), vec![(1, 0), (2, 1), (3, 2)]);

        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        let mut d = from_fn(MemoryKind::CurrentModeDependent, 1, move |xs, ms: &[usize]| {
            log.lock().unwrap().push((xs.len(), ms.to_vec()));
            DVector::zeros(1)
        });
        simulate(&sys, &mut d, &spec, None).unwrap();
        assert_eq!(
            *seen.lock().unwrap(),
            vec![(1, vec![1]), (2, vec![1, 0]), (3, vec![1, 0, 1])]
        );
    }

    #[test]
    fn adversary_kind_must_match_controller() {
        let sys = scalar_system(&[(0.5, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let mut c = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        let adv = adversarial_signal(&cert, MemoryKind::CurrentModeDependent).unwrap();
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 3, adv);
        assert!(matches!(simulate(&sys, &mut c, &spec, None), Err(Error::Signal(_))));
    }

    #[test]
    fn single_mode_adversary_is_constant() {
        let sys = scalar_system(&[(0.5, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let mut c = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        let adv = adversarial_signal(&cert, MemoryKind::CurrentModeIndependent).unwrap();
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 4, adv);
        let t = simulate(&sys, &mut c, &spec, None).unwrap();
        assert_eq!(t.modes, vec![0; 4]);
    }

    #[test]
    fn adversary_breaks_ties_towards_lowest_index() {
        let sys = scalar_system(&[(2.0, Some(1.0)), (-2.0, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default().mode_dependent(true)).unwrap();
        let mut c = lift_memoryless(ModeDependentController::new(&cert, &sys).unwrap());
        let adv = adversarial_signal(&cert, MemoryKind::CurrentModeDependent).unwrap();
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 3, adv);
        let t = simulate(&sys, &mut c, &spec, None).unwrap();
        assert_eq!(t.modes, vec![0, 0, 0]);
    }

    #[test]
    fn overflow_reports_the_step() {
        let sys = scalar_system(&[(1e200, None)]);
        let mut c = from_fn(MemoryKind::CurrentModeIndependent, 0, |_, _| DVector::zeros(0));
        let spec = SimulationSpec::nominal(DVector::from_element(1, 1.0), 5, SwitchingSignal::Periodic(vec![0]));
        match simulate(&sys, &mut c, &spec, None) {
            Err(Error::Simulation { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn disturbances_stay_in_the_ball_and_are_seeded() {
        let sys = SwitchedSystem::new(
            2,
            0,
            vec![("a".into(), DMatrix::from_element(2, 2, 0.0), DMatrix::zeros(2, 0))],
        )
        .unwrap();
        let mut c = from_fn(MemoryKind::CurrentModeIndependent, 0, |_, _| DVector::zeros(0));
        let mut spec = SimulationSpec::nominal(DVector::zeros(2), 200, SwitchingSignal::Periodic(vec![0]));
        spec.disturbance = 0.1;
        spec.disturbance_seed = 3;
        let a = simulate(&sys, &mut c, &spec, None).unwrap();
        let b = simulate(&sys, &mut c, &spec, None).unwrap();
        assert_eq!(a, b);
        let ws = a.disturbances.as_ref().unwrap();
        assert!(ws.iter().all(|w| w.norm() <= 0.1));
        // with A = 0 the next state is the disturbance itself
        assert!(a.states[1..].iter().zip(ws).all(|(x, w)| x == w));
        // uniform on the disk: about a quarter fall inside radius δ/2
        let inner = ws.iter().filter(|w| w.norm() < 0.05).count();
        assert!((25..=80).contains(&inner), "{inner}");
    }

    #[test]
    fn estimate_on_contracting_scalar() {
        let sys = scalar_system(&[(0.5, None)]);
        let cert = value_iteration(&sys, &SynthesisConfig { tol: 1e-9, ..SynthesisConfig::default() }).unwrap();
        let mut c = from_fn(MemoryKind::CurrentModeIndependent, 0, |_, _| DVector::zeros(0));
        let runs: Vec<Trajectory> = [1.0, -2.0]
            .iter()
            .map(|&x0| {
                let spec = SimulationSpec::nominal(DVector::from_element(1, x0), 10, SwitchingSignal::Periodic(vec![0]));
                simulate(&sys, &mut c, &spec, Some(&cert.norm)).unwrap()
            })
            .collect();
        let est = estimate_ues(&runs, &cert).unwrap();
        assert!((est.gamma_hat - 0.5).abs() < 1e-9);
        assert_eq!(est.bound_violations, 0);
        assert_eq!(est.steps, 20);
        assert!(matches!(estimate_ues(&[], &cert), Err(Error::Empty(_))));
    }

    #[test]
    fn deadbeat_estimate_is_zero() {
        let sys = scalar_system(&[(2.0, Some(1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        let mut c = lift_memoryless(MemorylessController::online(&cert, &sys).unwrap());
        let spec = SimulationSpec::nominal(DVector::from_element(1, 3.0), 5, SwitchingSignal::RandomSeeded(0));
        let t = simulate(&sys, &mut c, &spec, Some(&cert.norm)).unwrap();
        let est = estimate_ues(&[t], &cert).unwrap();
        assert_eq!(est.gamma_hat, 0.0);
        assert_eq!(est.bound_violations, 0);
    }
}
