use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reduced-model pipeline.
#[derive(Debug, Error)]
pub enum DvsError {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("problem is not in affine form: {0} (every operator, source and initial condition must be a finite sum of parameter-independent terms times scalar coefficient functions)")]
    NotAffine(String),

    #[error("singular step matrix at time step {step} (pivot {pivot:e} in row {row})")]
    SingularStep { step: usize, row: usize, pivot: f64 },

    #[error("time integration diverged at step {step}: norm {norm:e} exceeds {limit:e}")]
    Divergence { step: usize, norm: f64, limit: f64 },

    #[error("singular reduced step for term {term} at time index {step}: |l| = {l:e}, c = {c:e}")]
    SingularReducedStep { term: usize, step: usize, l: f64, c: f64 },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenNotConverged { iterations: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("model format error: {0}")]
    Format(String),

    #[error("model version {found_major}.{found_minor} is not supported (this build reads {supported_major}.x)")]
    Version {
        found_major: u16,
        found_minor: u16,
        supported_major: u16,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DvsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DvsError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical methods themselves (as opposed to
    /// bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DvsError::SingularStep { .. }
                | DvsError::Divergence { .. }
                | DvsError::SingularReducedStep { .. }
                | DvsError::EigenNotConverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, DvsError>;
