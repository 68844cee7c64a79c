use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library and the study harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 2 cells per direction, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("field shape {found:?} does not match grid {expected:?}")]
    GridMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("quadratic for the multiplier has A = {a:e}, C = {c:e}; need A > 0 and C < 0")]
    QuadraticPrecondition { a: f64, c: f64 },

    #[error("Stokes solve did not converge in {iterations} iterations (last residual {:e})", .residual_history.last().copied().unwrap_or(f64::NAN))]
    StokesDiverged {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("dense oracle limited to 16x16 grids, got {nx}x{ny}")]
    OracleTooLarge { nx: usize, ny: usize },

    #[error("dense oracle system is singular")]
    OracleSingular,

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
