//! Switched systems, their JSON file format, and closed-loop trajectories.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One element of the mode alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mode {
    pub name: String,
    pub index: usize,
}

/// `x(k+1) = A_σ(k) x(k) + B_σ(k) u(k)` over a finite family of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    n: usize,
    m: usize,
    names: Vec<String>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SystemFile {
    n: usize,
    m: usize,
    modes: Vec<ModeFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeFile {
    name: String,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    path: &str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::Dimension {
            path: path.to_string(),
            detail: format!("expected {nrows} rows, found {}", rows.len()),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Dimension {
                path: format!("{path}[{r}]"),
                detail: format!("expected {ncols} columns, found {}", row.len()),
            });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{path}[{r}][{c}]")));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn matrix_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|r| (0..mat.ncols()).map(|c| mat[(r, c)]).collect())
        .collect()
}

impl SwitchedSystem {
    /// Builds a validated system from `(name, A, B)` triples.
    pub fn new(
        n: usize,
        m: usize,
        modes: Vec<(String, DMatrix<f64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension {
                path: "n".into(),
                detail: "state dimension must be positive".into(),
            });
        }
        if modes.is_empty() {
            return Err(Error::EmptyModes);
        }
        let mut names = Vec::with_capacity(modes.len());
        let mut a_list = Vec::with_capacity(modes.len());
        let mut b_list = Vec::with_capacity(modes.len());
        for (i, (name, a, b)) in modes.into_iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::Dimension {
                    path: format!("modes[{i}].A"),
                    detail: format!("expected {n}x{n}, found {}x{}", a.nrows(), a.ncols()),
                });
            }
            if b.shape() != (n, m) {
                return Err(Error::Dimension {
                    path: format!("modes[{i}].B"),
                    detail: format!("expected {n}x{m}, found {}x{}", b.nrows(), b.ncols()),
                });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("modes[{i}].A")));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("modes[{i}].B")));
            }
            if names.contains(&name) {
                return Err(Error::Parse(format!("modes[{i}].name: duplicate label {name:?}")));
            }
            names.push(name);
            a_list.push(a);
            b_list.push(b);
        }
        Ok(SwitchedSystem {
            n,
            m,
            names,
            a: a_list,
            b: b_list,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_modes(&self) -> usize {
        self.a.len()
    }

    pub fn mode(&self, index: usize) -> Option<Mode> {
        self.names.get(index).map(|name| Mode {
            name: name.clone(),
            index,
        })
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.num_modes()).map(|i| self.mode(i).unwrap())
    }

    pub fn a(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    pub fn b(&self, i: usize) -> &DMatrix<f64> {
        &self.b[i]
    }

    /// `A_i x + B_i u`.
    pub fn step(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut next = &self.a[i] * x;
        if self.m > 0 {
            next += &self.b[i] * u;
        }
        next
    }

    /// Same system with every `B_i` replaced by `B_i S`.
    pub fn with_input_transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.shape() != (self.m, self.m) {
            return Err(Error::Dimension {
                path: "S".into(),
                detail: format!("expected {0}x{0}", self.m),
            });
        }
        let modes = (0..self.num_modes())
            .map(|i| (self.names[i].clone(), self.a[i].clone(), &self.b[i] * s))
            .collect();
        SwitchedSystem::new(self.n, self.m, modes)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.modes.is_empty() {
            return Err(Error::EmptyModes);
        }
        let mut modes = Vec::with_capacity(file.modes.len());
        for (i, mf) in file.modes.iter().enumerate() {
            let a = matrix_from_rows(&mf.a, file.n, file.n, &format!("modes[{i}].A"))?;
            let b = matrix_from_rows(&mf.b, file.n, file.m, &format!("modes[{i}].B"))?;
            modes.push((mf.name.clone(), a, b));
        }
        SwitchedSystem::new(file.n, file.m, modes)
    }

    pub fn to_json(&self) -> String {
        let file = SystemFile {
            n: self.n,
            m: self.m,
            modes: (0..self.num_modes())
                .map(|i| ModeFile {
                    name: self.names[i].clone(),
                    a: matrix_rows(&self.a[i]),
                    b: matrix_rows(&self.b[i]),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("system serialization cannot fail")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Parses the system file format.
pub fn load_system(text: &str) -> Result<SwitchedSystem> {
    SwitchedSystem::from_json(text)
}

/// States `x(0..=K)`, inputs and modes `0..K`, optional gauge values and
/// disturbances.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
    pub v_values: Option<Vec<f64>>,
    pub disturbances: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.modes.len()
    }

    pub fn check_lengths(&self) -> Result<()> {
        let k = self.modes.len();
        let ok = self.states.len() == k + 1
            && self.inputs.len() == k
            && self.v_values.as_ref().is_none_or(|v| v.len() == k + 1)
            && self.disturbances.as_ref().is_none_or(|w| w.len() == k);
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant("trajectory lengths inconsistent".into()))
        }
    }

    /// Largest relative deviation from the nominal recursion.
    pub fn recursion_residual(&self, system: &SwitchedSystem) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.horizon() {
            let mut pred = system.step(self.modes[k], &self.states[k], &self.inputs[k]);
            if let Some(w) = &self.disturbances {
                pred += &w[k];
            }
            let err = (&pred - &self.states[k + 1]).norm();
            let scale = pred.norm().max(self.states[k].norm()).max(f64::MIN_POSITIVE);
            worst = worst.max(err / scale);
        }
        worst
    }

    /// CSV with header `k,mode,x0..,u0..,V`; the final row leaves mode and
    /// inputs empty.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("k,mode");
        for i in 0..n {
            out.push_str(&format!(",x{i}"));
        }
        for j in 0..m {
            out.push_str(&format!(",u{j}"));
        }
        out.push_str(",V\n");
        for (k, x) in self.states.iter().enumerate() {
            out.push_str(&k.to_string());
            out.push(',');
            if k < self.modes.len() {
                out.push_str(&self.modes[k].to_string());
            }
            for v in x.iter() {
                out.push_str(&format!(",{v}"));
            }
            for j in 0..m {
                out.push(',');
                if k < self.inputs.len() {
                    out.push_str(&self.inputs[k][j].to_string());
                }
            }
            out.push(',');
            if let Some(vs) = &self.v_values {
                out.push_str(&vs[k].to_string());
            }
            out.push('\n');
        }
        out
    }
}
