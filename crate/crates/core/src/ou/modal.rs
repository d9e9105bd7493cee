use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::lu::ComplexLu;
use crate::linalg::ComplexEigenSystem;

/// Condition numbers above this make modal coordinates untrustworthy.
const MAX_CONDITION: f64 = 1e10;

/// Eigenvector basis `V` of a diagonalizable `A` with a factored `V`, so that
/// `x = Σ_j c_j v_j` can be solved for `c`.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    values: Vec<Complex64>,
    vectors: Vec<Vec<Complex64>>,
    lu: std::sync::Arc<ComplexLu>,
    condition: f64,
    /// Index of the conjugate partner, if any.
    partner: Vec<Option<usize>>,
}

impl ModalBasis {
    pub fn new(spectral: &ComplexEigenSystem) -> Result<Self> {
        let m = spectral.dim();
        let vectors = spectral.eigenvectors.clone();
        // row-major V with v_j as column j
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for (j, v) in vectors.iter().enumerate() {
            for i in 0..m {
                buf[i * m + j] = v[i];
            }
        }
        let lu = ComplexLu::factor(m, buf)?;
        let mut inv_norm2 = 0.0;
        for k in 0..m {
            let mut e = vec![Complex64::new(0.0, 0.0); m];
            e[k] = Complex64::new(1.0, 0.0);
            inv_norm2 += lu.solve(&e).iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        // ‖V‖_F = √m for unit columns
        let condition = (m as f64).sqrt() * inv_norm2.sqrt();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Numerical(format!(
                "eigenvector basis is ill-conditioned (cond ~ {condition:e})"
            )));
        }
        let values = spectral.eigenvalues.clone();
        let partner = (0..m)
            .map(|j| {
                if values[j].im == 0.0 {
                    return None;
                }
                [j.wrapping_sub(1), j + 1]
                    .into_iter()
                    .find(|&k| k < m && values[k] == values[j].conj())
            })
            .collect();
        Ok(Self {
            values,
            vectors,
            lu: std::sync::Arc::new(lu),
            condition,
            partner,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    /// Frobenius condition number estimate `‖V‖ ‖V⁻¹‖`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Coefficients `c` with `x = Σ_j c_j v_j`.
    pub fn coefficients(&self, x: &[f64]) -> Vec<Complex64> {
        let b: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.lu.solve(&b)
    }

    /// `Re Σ_j c_j v_j`.
    pub fn synthesize(&self, c: &[Complex64]) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m];
        for (cj, v) in c.iter().zip(&self.vectors) {
            for i in 0..m {
                out[i] += (cj * v[i]).re;
            }
        }
        out
    }

    /// For each index: weight 2 on the first member of a conjugate pair,
    /// 0 on the second, 1 on real eigenvalues. Real data then satisfies
    /// `x = Σ_j w_j Re(c_j v_j)`.
    pub(crate) fn real_weights(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| match self.partner[j] {
                None => 1.0,
                Some(k) if k > j => 2.0,
                Some(_) => 0.0,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig, Matrix};

    #[test]
    fn round_trip() {
        let a = Matrix::from_rows(&[
            vec![0.0, -1.0, 0.2],
            vec![1.0, 0.1, 0.0],
            vec![0.3, 0.0, 2.0],
        ])
        .unwrap();
        let basis = ModalBasis::new(&eig(&a).unwrap()).unwrap();
        let x = [0.3, -1.2, 2.5];
        let c = basis.coefficients(&x);
        let back = basis.synthesize(&c);
        for (u, v) in x.iter().zip(&back) {
            assert!((u - v).abs() < 1e-12);
        }
        let w = basis.real_weights();
        let mut half = vec![0.0; 3];
        for j in 0..3 {
            for i in 0..3 {
                half[i] += w[j] * (c[j] * basis.eigenvectors()[j][i]).re;
            }
        }
        for (u, v) in x.iter().zip(&half) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(basis.condition() >= 1.0);
    }
}
