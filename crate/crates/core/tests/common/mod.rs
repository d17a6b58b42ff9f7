#![allow(dead_code)]

use nalgebra::DMatrix;
use polystab::{value_iteration, Certificate, SwitchedSystem, SynthesisConfig, SynthesisStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn system(n: usize, m: usize, modes: Vec<(DMatrix<f64>, DMatrix<f64>)>) -> SwitchedSystem {
    SwitchedSystem::new(
        n,
        m,
        modes
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| (format!("m{i}"), a, b))
            .collect(),
    )
    .unwrap()
}

pub fn scalar(modes: &[(f64, Option<f64>)]) -> SwitchedSystem {
    let m = usize::from(modes[0].1.is_some());
    system(
        1,
        m,
        modes
            .iter()
            .map(|(a, b)| (DMatrix::from_element(1, 1, *a), DMatrix::from_iterator(1, m, b.iter().copied())))
            .collect(),
    )
}

/// Two-mode planar system with one input and Gaussian entries.
pub fn random_planar_system(seed: u64) -> SwitchedSystem {
    let mut r = rng(seed);
    let modes = (0..2)
        .map(|_| (gaussian_matrix(&mut r, 2, 2, 0.7), gaussian_matrix(&mut r, 2, 1, 1.0)))
        .collect();
    system(2, 1, modes)
}

pub fn config(directions: usize) -> SynthesisConfig {
    SynthesisConfig {
        directions,
        max_iters: 300,
        ..SynthesisConfig::default()
    }
}

/// The first `count` seeds from `0..` whose planar system converges.
pub fn converged_planar(count: usize, directions: usize) -> Vec<(u64, SwitchedSystem, Certificate)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let sys = random_planar_system(seed);
        let cert = value_iteration(&sys, &config(directions)).unwrap();
        if cert.status == SynthesisStatus::Converged {
            out.push((seed, sys, cert));
        }
        seed += 1;
    }
    out
}
