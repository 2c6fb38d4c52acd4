use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more parameter or configuration problems, reported together.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{what}: argument {value} outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dense path refused: n = {n} exceeds the limit {limit}")]
    MemoryGuard { n: usize, limit: usize },

    #[error("Lanczos did not converge after {iterations} steps; best residuals {residuals:?}")]
    NonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("z = {z} too close to the spectrum (must exceed {bound})")]
    SpectrumGuard { z: f64, bound: f64 },

    #[error("conjugate gradient for index {index} stalled after {iterations} steps at relative residual {residual:e}")]
    CgNonConvergence {
        index: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("repeated signal strengths {0:?}: use the subspace recovery experiment")]
    TiedSignals(Vec<f64>),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("campaign state in {dir} is inconsistent: {message}")]
    Corrupt { dir: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    /// Strips any per-trial wrapping.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for numerical solver failures (Lanczos or CG non-convergence).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NonConvergence { .. } | Error::CgNonConvergence { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io(_) | Error::Csv(_) | Error::Corrupt { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
