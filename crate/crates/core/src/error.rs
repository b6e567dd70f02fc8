use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("expected a {expected} field, found a {found} field")]
    DomainMismatch {
        expected: crate::grid::Domain,
        found: crate::grid::Domain,
    },
    #[error("unknown catalog function `{0}`")]
    UnknownFunction(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} is not a lattice point")]
    OffLattice(String),
    #[error("window is identically zero")]
    ZeroWindow,
    #[error("series has a constant term a00 = {0}; the nonlinearity must vanish at the origin")]
    ConstantTerm(Complex64),
    #[error("time-frequency matrix would hold {entries} entries (limit {limit})")]
    TooLarge { entries: usize, limit: usize },
    #[error("field is not 1-periodic: off-integer spectral mass {0:.3e} relative to peak")]
    NotPeriodic(f64),
    #[error("Picard iteration failed: {0}")]
    NonConvergence(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("malformed field container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
