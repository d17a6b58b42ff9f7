//! A-posteriori validation of certificates: norm axioms, Bellman residuals,
//! recomputed decrease ratios and, in the plane, a sound sector-wise
//! contraction bound for the sector controller.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bellman::{direction_grid, BellmanOperator, Certificate};
use crate::controllers::{build_sector_controller_2d, SectorLinearController2D};
use crate::error::{Error, Result};
use crate::model::SwitchedSystem;
use crate::norm::BalancedPolytopeNorm;

const AXIOM_TOL: f64 = 1e-9;
const TURN_TOL: f64 = 1e-12;
const GAMMA_SLACK: f64 = 1e-6;
const RHO_AGREEMENT: f64 = 1e-6;
const VERTEX_MATCH_TOL: f64 = 1e-12;

/// Outcome of [`check_norm_axioms`] with the worst observed deviations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormAxiomReport {
    pub samples: usize,
    pub positive_definite: bool,
    pub homogeneity: bool,
    pub subadditivity: bool,
    /// Left turns of the planar ball; `None` outside the plane.
    pub convexity: Option<bool>,
    /// Smallest `V(x) / ‖x‖₂` seen.
    pub min_value_ratio: f64,
    /// Largest `|V(λx) − |λ|V(x)| / V(x)`.
    pub max_homogeneity_error: f64,
    /// Largest `V(x+y) − V(x) − V(y)`.
    pub max_subadditivity_excess: f64,
    /// Smallest cross product of consecutive polygon edges.
    pub min_turn: Option<f64>,
    pub pass: bool,
}

/// Checks the norm axioms on `sample_count` seeded Gaussian samples, plus
/// convexity of the polygon when `dim = 2`.
pub fn check_norm_axioms(norm: &BalancedPolytopeNorm, sample_count: usize, seed: u64) -> Result<NormAxiomReport> {
    let n = norm.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let mut min_value_ratio = f64::INFINITY;
    let mut max_homogeneity_error = 0.0f64;
    let mut max_subadditivity_excess = f64::NEG_INFINITY;
    let mut positive_definite = true;
    for _ in 0..sample_count {
        let x = gaussian(&mut rng);
        let y = gaussian(&mut rng);
        let lambda: f64 = rng.random_range(-10.0..10.0);
        let vx = norm.eval(&x)?;
        let vy = norm.eval(&y)?;
        let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 0.0 {
            positive_definite &= vx > 0.0;
            min_value_ratio = min_value_ratio.min(vx / len);
        }
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let err = (norm.eval(&scaled)? - lambda.abs() * vx).abs();
        if vx > 0.0 {
            max_homogeneity_error = max_homogeneity_error.max(err / vx);
        } else if err > 0.0 {
            max_homogeneity_error = f64::INFINITY;
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        max_subadditivity_excess = max_subadditivity_excess.max(norm.eval(&sum)? - vx - vy);
    }
    if sample_count == 0 {
        min_value_ratio = 0.0;
        max_subadditivity_excess = 0.0;
    }
    let min_turn = (n == 2).then(|| min_turn(norm)).transpose()?;
    let homogeneity = max_homogeneity_error <= AXIOM_TOL;
    let subadditivity = max_subadditivity_excess <= AXIOM_TOL;
    let convexity = min_turn.map(|t| t >= -TURN_TOL);
    Ok(NormAxiomReport {
        samples: sample_count,
        positive_definite,
        homogeneity,
        subadditivity,
        convexity,
        min_value_ratio,
        max_homogeneity_error,
        max_subadditivity_excess,
        min_turn,
        pass: positive_definite && homogeneity && subadditivity && convexity.unwrap_or(true),
    })
}

fn min_turn(norm: &BalancedPolytopeNorm) -> Result<f64> {
    let poly = norm.full_polygon()?;
    let k = poly.len();
    Ok((0..k)
        .map(|j| {
            let (a, b, c) = (poly[j], poly[(j + 1) % k], poly[(j + 2) % k]);
            (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        })
        .fold(f64::INFINITY, f64::min))
}

/// Largest `|T V̂(d) − V̂(d)| / V̂(d)` over a grid of `test_directions`
/// directions, with `T` the operator matching the certificate.
pub fn bellman_residual(cert: &Certificate, system: &SwitchedSystem, test_directions: usize) -> Result<f64> {
    cert.check_system(system)?;
    cert.require_converged()?;
    let grid = direction_grid(system.n(), test_directions);
    let op = BellmanOperator::new(&cert.norm, system)?;
    let residuals: Vec<f64> = grid
        .par_iter()
        .map(|d| {
            let v = cert.norm.eval(d)?;
            Ok((op.value(d, cert.mode_dependent)? - v).abs() / v)
        })
        .collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Largest closed-loop ratio `max_i V̂(x⁺)/V̂(x)` over the grid used at
/// synthesis time (twice the synthesis directions).
pub fn rho_recomputed(cert: &Certificate, system: &SwitchedSystem) -> Result<f64> {
    cert.check_system(system)?;
    let grid = direction_grid(system.n(), 2 * cert.directions);
    let op = BellmanOperator::new(&cert.norm, system)?;
    let ratios: Vec<f64> = grid
        .par_iter()
        .map(|d| op.closed_loop_ratio(d, cert.mode_dependent))
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Result of [`verify_sector_certificate_2d`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorCertificate {
    pub pass: bool,
    /// Per-step contraction of the sector controller: for `x` in any sector
    /// and any mode, `V̂(A_i x + B_i u(x)) ≤ worst_sector_ratio · V̂(x)`.
    pub worst_sector_ratio: f64,
    pub worst_sector: usize,
    pub worst_mode: usize,
}

fn endpoint_ratio(
    norm: &BalancedPolytopeNorm,
    system: &SwitchedSystem,
    mode: usize,
    p: [f64; 2],
    u: &DVector<f64>,
) -> Result<f64> {
    let x = DVector::from_column_slice(&p);
    Ok(norm.eval_vec(&system.step(mode, &x, u))? / norm.eval(&p)?)
}

/// Checks every sector and mode at the two sector endpoints. Inside a
/// sector the closed loop is linear and the segment between the endpoints
/// lies on a face of the ball, so the endpoint maximum bounds the ratio on
/// the whole sector.
pub fn verify_sector_certificate_2d(
    cert: &Certificate,
    controller: &SectorLinearController2D,
    system: &SwitchedSystem,
) -> Result<SectorCertificate> {
    cert.check_system(system)?;
    cert.require_converged()?;
    if system.n() != 2 {
        return Err(Error::Certificate(format!("sector certificate needs n = 2, system has n = {}", system.n())));
    }
    let poly = cert.norm.full_polygon()?;
    let same = poly.len() == controller.vertices().len()
        && poly.iter().zip(controller.vertices()).all(|(a, b)| {
            let scale = a[0].abs().max(a[1].abs());
            (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) <= VERTEX_MATCH_TOL * scale
        });
    if !same {
        return Err(Error::Certificate("controller vertices differ from the certificate ball".into()));
    }
    let per_sector: Vec<(f64, usize)> = (0..controller.num_sectors())
        .into_par_iter()
        .map(|j| {
            let s = controller.sector(j);
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..system.num_modes() {
                let r = endpoint_ratio(&cert.norm, system, i, s.p, &s.up)?
                    .max(endpoint_ratio(&cert.norm, system, i, s.q, &s.uq)?);
                if r > best.0 {
                    best = (r, i);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (worst_sector, &(worst, worst_mode)) = per_sector
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, usize))>, (j, r)| match acc {
            Some((_, best)) if best.0 >= r.0 => acc,
            _ => Some((j, r)),
        })
        .ok_or_else(|| Error::Certificate("controller has no sectors".into()))?;
    Ok(SectorCertificate {
        pass: worst < 1.0,
        worst_sector_ratio: worst,
        worst_sector,
        worst_mode,
    })
}

/// Largest ratio `max_i V̂(x⁺)/V̂(x)` of the sector controller at
/// `points_per_sector` interior points of every sector.
pub fn sample_sector_ratios(
    cert: &Certificate,
    controller: &SectorLinearController2D,
    system: &SwitchedSystem,
    points_per_sector: usize,
) -> Result<f64> {
    cert.check_system(system)?;
    let per_sector: Vec<f64> = (0..controller.num_sectors())
        .into_par_iter()
        .map(|j| {
            let s = controller.sector(j);
            let mut best = 0.0f64;
            for t in 1..=points_per_sector {
                let w = t as f64 / (points_per_sector + 1) as f64;
                let x = [(1.0 - w) * s.p[0] + w * s.q[0], (1.0 - w) * s.p[1] + w * s.q[1]];
                let u = controller.eval(&x)?;
                let vx = cert.norm.eval(&x)?;
                let xv = DVector::from_column_slice(&x);
                for i in 0..system.num_modes() {
                    best = best.max(cert.norm.eval_vec(&system.step(i, &xv, &u))? / vx);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(per_sector.into_iter().fold(0.0, f64::max))
}

/// Tunables of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    pub residual_tol: f64,
    /// Residual grid size; defaults to twice the synthesis directions.
    pub test_directions: Option<usize>,
    pub axiom_samples: usize,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            residual_tol: 5e-3,
            test_directions: None,
            axiom_samples: 1000,
            seed: 0,
        }
    }
}

/// Everything [`certify`] checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub tool_version: String,
    pub system_hash: String,
    pub certificate_hash: String,
    pub mode_dependent: bool,
    /// Set when the check is sample-based only (`n ≥ 3`).
    pub sampled: bool,
    pub norm_axioms_pass: bool,
    pub norm_axioms: NormAxiomReport,
    pub bellman_residual_max: f64,
    pub residual_tol: f64,
    pub test_directions: usize,
    pub rho: f64,
    pub rho_recomputed: f64,
    pub rho_consistent: bool,
    pub c2: f64,
    pub gamma_bound_check: bool,
    pub sector_certificate: Option<SectorCertificate>,
    pub pass: bool,
}

impl CertReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Hex SHA-256 of the certificate file encoding.
pub fn certificate_hash(cert: &Certificate) -> String {
    hex::encode(Sha256::digest(cert.to_json().as_bytes()))
}

/// Runs every check applicable to `cert`. The sector certificate is produced
/// for planar mode-independent certificates.
pub fn certify(cert: &Certificate, system: &SwitchedSystem, config: &CertifyConfig) -> Result<CertReport> {
    cert.check_system(system)?;
    cert.require_converged()?;
    let rho = cert.rho.ok_or_else(|| Error::Certificate("rho missing".into()))?;
    let c2 = cert.c2.ok_or_else(|| Error::Certificate("c2 missing".into()))?;
    let test_directions = config.test_directions.unwrap_or(2 * cert.directions);
    let norm_axioms = check_norm_axioms(&cert.norm, config.axiom_samples, config.seed)?;
    let residual = bellman_residual(cert, system, test_directions)?;
    let recomputed = rho_recomputed(cert, system)?;
    let rho_consistent = (recomputed - rho).abs() <= RHO_AGREEMENT;
    let gamma_bound_check = rho <= 1.0 - 1.0 / c2 + GAMMA_SLACK;
    let sector_certificate = if system.n() == 2 && !cert.mode_dependent {
        let controller = build_sector_controller_2d(cert, system)?;
        Some(verify_sector_certificate_2d(cert, &controller, system)?)
    } else {
        None
    };
    let pass = norm_axioms.pass
        && residual <= config.residual_tol
        && rho_consistent
        && gamma_bound_check
        && sector_certificate.as_ref().is_none_or(|s| s.pass);
    Ok(CertReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        system_hash: system.hash(),
        certificate_hash: certificate_hash(cert),
        mode_dependent: cert.mode_dependent,
        sampled: cert.sampled,
        norm_axioms_pass: norm_axioms.pass,
        norm_axioms,
        bellman_residual_max: residual,
        residual_tol: config.residual_tol,
        test_directions,
        rho,
        rho_recomputed: recomputed,
        rho_consistent,
        c2,
        gamma_bound_check,
        sector_certificate,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::{value_iteration, SynthesisConfig, SynthesisStatus};
    use nalgebra::DMatrix;

    fn system(modes: Vec<(DMatrix<f64>, DMatrix<f64>)>) -> SwitchedSystem {
        let n = modes[0].0.nrows();
        let m = modes[0].1.ncols();
        SwitchedSystem::new(
            n,
            m,
            modes.into_iter().enumerate().map(|(i, (a, b))| (format!("m{i}"), a, b)).collect(),
        )
        .unwrap()
    }

    fn circle(k: usize) -> BalancedPolytopeNorm {
        let pts = (0..k)
            .map(|j| {
                let t = std::f64::consts::PI * j as f64 / k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        BalancedPolytopeNorm::new(2, pts).unwrap()
    }

    #[test]
    fn circle_polygon_passes_axioms() {
        let report = check_norm_axioms(&circle(180), 500, 3).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.min_value_ratio >= 1.0 - 1e-12);
        assert_eq!(report.convexity, Some(true));
    }

    #[test]
    fn interior_vertex_fails_convexity() {
        let norm = BalancedPolytopeNorm::new(2, vec![vec![1.0, 0.0], vec![0.3, 0.3], vec![0.0, 1.0]]).unwrap();
        let report = check_norm_axioms(&norm, 100, 1).unwrap();
        assert_eq!(report.convexity, Some(false));
        assert!(!report.pass);
    }

    #[test]
    fn axioms_are_seed_deterministic() {
        let norm = BalancedPolytopeNorm::cross_polytope(3);
        let a = check_norm_axioms(&norm, 200, 11).unwrap();
        let b = check_norm_axioms(&norm, 200, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.pass);
        assert_eq!(a.convexity, None);
    }

    #[test]
    fn scalar_deadbeat_residual_is_zero() {
        let sys = system(vec![(DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0))]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        assert!(bellman_residual(&cert, &sys, 64).unwrap() <= 1e-9);
        let report = certify(&cert, &sys, &CertifyConfig::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.sector_certificate.is_none());
    }

    #[test]
    fn stable_scalar_residual_meets_tail_bound() {
        let sys = system(vec![(DMatrix::from_element(1, 1, 0.5), DMatrix::zeros(1, 0))]);
        let config = SynthesisConfig {
            tol: 1e-6,
            ..SynthesisConfig::default()
        };
        let cert = value_iteration(&sys, &config).unwrap();
        assert!(bellman_residual(&cert, &sys, 16).unwrap() <= 5e-6);
    }

    #[test]
    fn embedded_deadbeat_sector_certificate() {
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let sys = system(vec![(a, b)]);
        let config = SynthesisConfig {
            directions: 72,
            ..SynthesisConfig::default()
        };
        let cert = value_iteration(&sys, &config).unwrap();
        assert_eq!(cert.status, SynthesisStatus::Converged);
        let controller = build_sector_controller_2d(&cert, &sys).unwrap();
        let sc = verify_sector_certificate_2d(&cert, &controller, &sys).unwrap();
        assert!(sc.pass);
        assert!(sc.worst_sector_ratio <= 0.5 + 1e-6, "{sc:?}");
        let dense = sample_sector_ratios(&cert, &controller, &sys, 50).unwrap();
        assert!(dense <= sc.worst_sector_ratio + 1e-9);
        let report = certify(&cert, &sys, &CertifyConfig::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.rho_consistent);
    }

    #[test]
    fn non_converged_certificate_is_rejected() {
        let sys = system(vec![
            (DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 1.0)),
            (DMatrix::from_element(1, 1, -2.0), DMatrix::from_element(1, 1, 1.0)),
        ]);
        let cert = value_iteration(&sys, &SynthesisConfig::default()).unwrap();
        assert_eq!(cert.status, SynthesisStatus::Diverged);
        assert!(matches!(bellman_residual(&cert, &sys, 8), Err(Error::Certificate(_))));
        assert!(certify(&cert, &sys, &CertifyConfig::default()).is_err());
        let mut forced = cert.clone();
        forced.status = SynthesisStatus::Converged;
        forced.rho = Some(1.5);
        assert!(matches!(certify(&forced, &sys, &CertifyConfig::default()), Err(Error::Certificate(_))));
    }

    #[test]
    fn mismatched_controller_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = system(vec![(a, b)]);
        let config = SynthesisConfig {
            directions: 36,
            ..SynthesisConfig::default()
        };
        let cert = value_iteration(&sys, &config).unwrap();
        let controller = build_sector_controller_2d(&cert, &sys).unwrap();
        let mut other = cert.clone();
        other.norm = circle(18);
        assert!(matches!(
            verify_sector_certificate_2d(&other, &controller, &sys),
            Err(Error::Certificate(_))
        ));
    }
}
