//! LU factorization with partial pivoting, real and complex.

use num_complex::Complex64;

use super::Matrix;
use crate::error::{Error, Result};

pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &Matrix) -> Result<Self> {
        let n = m.require_square("LU operand")?;
        let mut lu = m.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * 1e-300 || pivot == 0.0 {
                return Err(Error::Numerical(format!(
                    "singular matrix (zero pivot in column {k})"
                )));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            let x = self.solve_vec(&col);
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension("right-hand side row count".into()));
    }
    Ok(Lu::factor(a)?.solve(b))
}

pub fn solve_vec(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::Dimension("right-hand side length".into()));
    }
    Ok(Lu::factor(a)?.solve_vec(b))
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.require_square("inverse operand")?;
    Ok(Lu::factor(a)?.solve(&Matrix::identity(n)))
}

/// Complex LU on a row-major `n x n` buffer. Zero pivots are replaced by
/// `tiny` so that shifted systems at an exact eigenvalue stay solvable.
#[derive(Debug)]
pub(crate) struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    pub(crate) fn factor_perturbed(n: usize, mut lu: Vec<Complex64>, tiny: f64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, _) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            if lu[k * n + k].norm() < tiny {
                lu[k * n + k] = Complex64::new(tiny, 0.0);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Self { n, lu, perm }
    }

    pub(crate) fn factor(n: usize, lu: Vec<Complex64>) -> Result<Self> {
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let f = Self::factor_perturbed(n, lu, 0.0);
        for k in 0..n {
            if f.lu[k * n + k].norm() <= scale * 1e-14 {
                return Err(Error::Numerical(format!(
                    "singular complex system (pivot {k})"
                )));
            }
        }
        Ok(f)
    }

    pub(crate) fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..i {
                s += self.lu[i * n + j] * x[j];
            }
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for j in i + 1..n {
                s += self.lu[i * n + j] * x[j];
            }
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Product of the pivots with the permutation sign.
    pub(crate) fn determinant(&self) -> Complex64 {
        let n = self.n;
        let mut det = Complex64::new(1.0, 0.0);
        for k in 0..n {
            det *= self.lu[k * n + k];
        }
        // parity of the permutation
        let mut seen = vec![false; n];
        let mut transpositions = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            transpositions += len - 1;
        }
        if transpositions % 2 == 1 {
            -det
        } else {
            det
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let x = solve_vec(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        let inv = inverse(&a).unwrap();
        let id = &a * &inv;
        assert!((&id - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(inverse(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn complex_determinant_sign() {
        let c = |r: f64| Complex64::new(r, 0.0);
        // [[0,1],[1,0]] has determinant -1
        let f = ComplexLu::factor(2, vec![c(0.0), c(1.0), c(1.0), c(0.0)]).unwrap();
        assert!((f.determinant() - c(-1.0)).norm() < 1e-15);
    }
}
