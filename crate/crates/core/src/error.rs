use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("component mismatch: expected {expected}, found {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("magnetization norm {norm:.3e} at node {node} is below the degeneracy threshold")]
    DegenerateMagnetization { node: usize, norm: f64 },

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("time step {dt:.3e} violates the CFL bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("time step {dt:.3e} exceeds the penalty stiffness cap {cap:.3e}")]
    PenaltyStiffness { dt: f64, cap: f64 },

    #[error("step {step} at t = {t:.6}: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("too few records: need at least {needed}, have {have}")]
    TooFewRecords { needed: usize, have: usize },

    #[error("trajectory cadence mismatch: {0}")]
    Cadence(String),

    #[error("degrees of freedom {dofs} exceed the dense budget {budget}")]
    DofBudget { dofs: usize, budget: usize },

    #[error("no nearby equilibrium: mean magnetization norm {0:.3e}")]
    NoEquilibrium(f64),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("ambiguous numerical rank: singular-value gap {0:.3e}")]
    RankAmbiguous(f64),

    #[error("snapshot: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("snapshot: unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("snapshot: truncated payload (need {needed} bytes, have {have})")]
    Truncated { needed: usize, have: usize },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
