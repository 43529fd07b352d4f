use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },

    #[error("dimension mismatch for {name}: expected {expected}, found {found}")]
    DimensionMismatch {
        name: &'static str,
        expected: String,
        found: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible sub-problem: {0}")]
    Infeasible(String),

    #[error("solution has no receiver matrix")]
    MissingReceiver,

    #[error("rate decreased by {drop:.3e} bits at iteration {iteration}")]
    NonMonotone { iteration: usize, drop: f64 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
