use thiserror::Error;

/// Errors raised by the solvers and data-model constructors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP: {}", .0.join("; "))]
    InvalidMdp(Vec<String>),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unbalanced masses: {0} vs {1}")]
    Unbalanced(f64, f64),

    #[error("did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("problem too large for a direct solve: {n} states (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("semimetric is not of negative type (min eigenvalue {min_eigenvalue:e})")]
    NotNegativeType { min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reward dispersion is zero, cannot rescale to sigma {0}")]
    DegenerateGarnet(f64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear system is singular")]
    Singular,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
