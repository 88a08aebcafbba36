use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("eigendecomposition did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("candidate index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("regressors span a space of rank {rank} < {m}; no nonsingular design exists")]
    RankDeficient { rank: usize, m: usize },

    #[error("approximate solver hit the iteration cap ({iterations}) with efficiency bound {eff_lower_bound}")]
    IterationCap { iterations: usize, eff_lower_bound: f64 },

    #[error("{n} trials cannot cover a support of size {support}")]
    TooFewTrials { n: usize, support: usize },

    #[error("exchange start design is singular")]
    SingularStart,

    #[error("enumeration needs {required} designs, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("no root: d^(1/m) = {root_d} exceeds t/m = {t_over_m}")]
    InfeasiblePair { root_d: f64, t_over_m: f64 },

    #[error("safety violation: optimal support indices {missing:?} were pruned")]
    SafetyViolation { missing: Vec<usize> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Step { source, .. } => source.exit_code(),
            Error::SafetyViolation { .. } => 4,
            Error::NotPositiveDefinite { .. }
            | Error::ConvergenceFailure { .. }
            | Error::RankDeficient { .. }
            | Error::IterationCap { .. }
            | Error::SingularStart
            | Error::InfeasiblePair { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn at_step(self, step: &'static str) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Strips any step tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
