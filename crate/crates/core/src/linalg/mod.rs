//! Dense linear algebra for small matrices (m <= 64).

mod eig;
mod expm;
pub mod lu;
mod lyapunov;
mod matrix;
mod symmetric;

pub use eig::{eig, eig_with_tolerance, ComplexEigenSystem, DEFAULT_DISTINCT_TOL};
pub use expm::mat_exp;
pub use lu::{inverse, solve, solve_vec};
pub use lyapunov::{lyapunov_residual, lyapunov_solve, STABILITY_MARGIN};
pub use matrix::{dot, norm2, Matrix};
pub use symmetric::{
    polar_orthogonal, psd_eigen, psd_sqrt, spectral_function, symmetric_eigen, SymmetricEigen,
    PSD_CLAMP,
};
