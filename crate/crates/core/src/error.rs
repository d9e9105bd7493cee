use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical kernels and the experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    /// Some eigenvalue has real part at or below the stability margin.
    #[error("matrix is not positively stable: eigenvalue {eigenvalue} has real part <= {margin:e}")]
    NotHurwitz { eigenvalue: Complex64, margin: f64 },

    #[error("QR iteration did not converge after {iterations} iterations ({} eigenvalues found)", .partial.len())]
    NoConvergence {
        iterations: usize,
        partial: Vec<Complex64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("spectrum is not generic: {0}")]
    NotGeneric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("state blew up at step {step} (|x| = {norm:e})")]
    BlowUp { step: usize, norm: f64 },

    /// The initial state coincides with the stationary mean.
    #[error("degenerate initial state: x equals the stationary mean A^-1 sigma E[L1]")]
    DegenerateInitialState,

    #[error("out of scope: {0}")]
    OutOfScope(String),
}

pub type Result<T> = std::result::Result<T, Error>;
