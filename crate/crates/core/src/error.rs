use std::path::PathBuf;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("offloading {bits} bits in zero time is infeasible")]
    InfeasiblePair { bits: f64 },

    #[error("dual point violates G(lambda, rho) <= 0 (max eigenvalue {max_eigenvalue:e})")]
    DualInfeasible { max_eigenvalue: f64 },

    #[error("logic error: {0}")]
    Logic(String),

    #[error("unsupported instance size: {0}")]
    UnsupportedSize(String),

    #[error("ellipsoid method found no dual-feasible center after {iterations} iterations")]
    NoFeasibleCenter { iterations: usize },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
