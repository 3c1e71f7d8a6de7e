use std::path::PathBuf;

use thiserror::Error;

use crate::eigensolver::PrincipalPair;
use crate::fibering::FiberSolution;

pub type Result<T> = std::result::Result<T, Error>;

/// Best iterate carried out of a solver that ran out of iterations.
#[derive(Debug, Clone)]
pub enum BestIterate {
    Principal(Box<PrincipalPair>),
    Fiber(Box<FiberSolution>),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error(
        "weight is not integrable: relative change {relative_change:.3e} of the L^{exponent} proxy \
         under doubling r_outer exceeds {tolerance:.3e}"
    )]
    NonIntegrableWeight {
        exponent: f64,
        relative_change: f64,
        tolerance: f64,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("boundary trace must vanish: v[{index}] = {value}")]
    NonzeroTrace { index: usize, value: f64 },

    #[error("degenerate gradient in cell {cell}: exponent < 2 with zero slope and no regularisation")]
    DegenerateGradient { cell: usize },

    #[error("function is not in H_λ⁻ (H = {h_value:e})")]
    NotInHMinus { h_value: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Option<BestIterate>,
    },

    #[error("iterate left H_λ⁻ and backtracking could not restore membership")]
    LeftHMinus,

    #[error("no sample on the G = 1 sphere satisfies H < 0")]
    EmptyFeasibleSet,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
