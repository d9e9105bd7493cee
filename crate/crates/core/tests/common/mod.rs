#![allow(dead_code)]

use ou_cutoff::linalg::{polar_orthogonal, Matrix};
use ou_cutoff::rng::RngStream;

pub fn gaussian_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    let mut data = vec![0.0; rows * cols];
    rng.standard_normals(&mut data);
    Matrix::from_row_major(rows, cols, data).unwrap()
}

pub fn gaussian_vector(rng: &mut RngStream, m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    rng.standard_normals(&mut v);
    v
}

pub fn orthogonal(rng: &mut RngStream, m: usize) -> Matrix {
    polar_orthogonal(&gaussian_matrix(rng, m, m)).unwrap()
}

/// `S + K` with `S` symmetric positive definite and `K` skew: every
/// eigenvalue has real part at least `floor`.
pub fn stable_matrix(rng: &mut RngStream, m: usize, floor: f64) -> Matrix {
    let g = gaussian_matrix(rng, m, m).scale(1.0 / (m as f64).sqrt());
    let s = &(&g * &g.transpose()) + &Matrix::identity(m).scale(floor);
    let h = gaussian_matrix(rng, m, m).scale(0.7);
    let k = &h - &h.transpose();
    &s + &k
}

/// Symmetric `Qᵀ diag(λ) Q`-type matrix with the given spectrum; returns
/// the matrix and the eigenvectors as columns of `Q`.
pub fn symmetric_with_spectrum(rng: &mut RngStream, lambdas: &[f64]) -> (Matrix, Matrix) {
    let m = lambdas.len();
    let q = orthogonal(rng, m);
    let a = &(&q * &Matrix::from_diag(lambdas)) * &q.transpose();
    (a.symmetrized(), q)
}

pub fn column(m: &Matrix, j: usize) -> Vec<f64> {
    (0..m.rows()).map(|i| m[(i, j)]).collect()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).max_abs()
}
