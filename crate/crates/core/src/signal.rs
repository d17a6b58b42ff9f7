//! Switching signals `σ: ℕ → Σ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::MemoryKind;
use crate::error::{Error, Result};
use crate::norm::BalancedPolytopeNorm;

/// Source of the mode sequence of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingSignal {
    /// `σ(k)` read from a list; undefined past its end.
    Explicit(Vec<usize>),
    /// Uniform modes from a seeded generator; `σ(k)` depends only on the
    /// seed and `k`.
    RandomSeeded(u64),
    /// `σ(k) = pattern[k mod len]`.
    Periodic(Vec<usize>),
    /// Greedy worst case for `norm`: the mode maximizing the norm of the next
    /// state, lowest index on ties. `kind` is the controller kind it was
    /// built for.
    Adversarial {
        norm: BalancedPolytopeNorm,
        kind: MemoryKind,
    },
}

impl SwitchingSignal {
    pub fn is_adversarial(&self) -> bool {
        matches!(self, SwitchingSignal::Adversarial { .. })
    }

    /// Checks mode indices against `num_modes`.
    pub fn validate(&self, num_modes: usize) -> Result<()> {
        let check = |seq: &[usize], what: &str| -> Result<()> {
            if let Some(&i) = seq.iter().find(|&&i| i >= num_modes) {
                return Err(Error::Signal(format!(
                    "{what} signal uses mode {i} but the system has {num_modes} modes"
                )));
            }
            Ok(())
        };
        match self {
            SwitchingSignal::Explicit(seq) => check(seq, "explicit"),
            SwitchingSignal::Periodic(pattern) => {
                if pattern.is_empty() {
                    return Err(Error::Signal("periodic pattern is empty".into()));
                }
                check(pattern, "periodic")
            }
            SwitchingSignal::RandomSeeded(_) | SwitchingSignal::Adversarial { .. } => Ok(()),
        }
    }

    /// `σ(k)` for the signals that do not look at the state.
    pub fn mode_at(&self, k: usize, num_modes: usize) -> Result<usize> {
        let mode = match self {
            SwitchingSignal::Explicit(seq) => *seq.get(k).ok_or_else(|| {
                Error::Signal(format!(
                    "explicit signal has {} entries, step {k} requested",
                    seq.len()
                ))
            })?,
            SwitchingSignal::Periodic(pattern) => {
                if pattern.is_empty() {
                    return Err(Error::Signal("periodic pattern is empty".into()));
                }
                pattern[k % pattern.len()]
            }
            SwitchingSignal::RandomSeeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                rng.random_range(0..num_modes)
            }
            SwitchingSignal::Adversarial { .. } => {
                return Err(Error::Signal(
                    "an adversarial signal needs the state and the controller".into(),
                ))
            }
        };
        if mode >= num_modes {
            return Err(Error::Signal(format!(
                "mode {mode} at step {k} but the system has {num_modes} modes"
            )));
        }
        Ok(mode)
    }
}

/// Parses `random`, `adversarial`, `periodic:<i,j,…>` or `explicit:<i,…>`.
/// `random` takes `seed`; `adversarial` needs the norm and controller kind,
/// so it is returned as `None` for the caller to build.
pub fn parse_signal(text: &str, seed: u64) -> Result<Option<SwitchingSignal>> {
    let list = |body: &str| -> Result<Vec<usize>> {
        body.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Signal(format!("bad mode index {t:?}: {e}")))
            })
            .collect()
    };
    match text.split_once(':') {
        None if text == "random" => Ok(Some(SwitchingSignal::RandomSeeded(seed))),
        None if text == "adversarial" => Ok(None),
        Some(("periodic", body)) => Ok(Some(SwitchingSignal::Periodic(list(body)?))),
        Some(("explicit", body)) => Ok(Some(SwitchingSignal::Explicit(list(body)?))),
        _ => Err(Error::Signal(format!(
            "unknown signal {text:?}; expected random, adversarial, periodic:<list> or explicit:<list>"
        ))),
    }
}
