use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch at {path}: {detail}")]
    Dimension { path: String, detail: String },
    #[error("mode list is empty")]
    EmptyModes,
    #[error("non-finite entry at {0}")]
    NonFinite(String),
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
    #[error("ball not full-dimensional")]
    NotFullDimensional,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("inner minimization unbounded")]
    Unbounded,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("certificate not usable: {0}")]
    Certificate(String),
    #[error("controller error: {0}")]
    Controller(String),
    #[error("switching signal error: {0}")]
    Signal(String),
    #[error("simulation error at step {step}: {detail}")]
    Simulation { step: usize, detail: String },
    #[error("{0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
