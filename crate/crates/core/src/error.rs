use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("charge density is not neutral: sum(rho)*dx = {total:e} exceeds tolerance {tol:e}")]
    NonNeutralCharge { total: f64, tol: f64 },

    #[error("magnetic field has nonzero mean: sum(B)*dx = {total:e} exceeds tolerance {tol:e}")]
    NonZeroMeanB { total: f64, tol: f64 },

    #[error("field step requires dt == dx (dt = {dt:e}, dx = {dx:e})")]
    StepMismatch { dt: f64, dx: f64 },

    #[error("velocity CFL violated: max|K|*dt = {courant:e} > {limit:e}")]
    CflViolation { courant: f64, limit: f64 },

    #[error("elapsed time must be positive, got {0:e}")]
    NonPositiveElapsed(f64),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("Picard iteration did not converge after {iterations} iterations (last ratio {ratio:e})")]
    NoConvergence { iterations: usize, ratio: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("snapshot version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt snapshot payload: {0}")]
    CorruptPayload(String),

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
