use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: variance is zero")]
    DegenerateVariance,

    #[error("likelihood ratio overflow (log-weight {log_weight})")]
    WeightOverflow { log_weight: f64 },

    #[error("all importance weights are zero")]
    DegenerateWeights,

    #[error("no valid bracket found; last tried [{lo}, {hi}]")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("bisection did not converge in {iterations} iterations; last bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64, iterations: usize },

    #[error("invalid linear program: {0}")]
    InvalidProgram(String),

    #[error("LP numerical failure at threshold index {threshold}")]
    LpNumerical { threshold: usize },

    #[error("alpha {alpha} is not reached by the upper CDF envelope on the grid")]
    GridTooShort { alpha: f64 },

    #[error("moment-feasible set is empty")]
    Infeasible,

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
