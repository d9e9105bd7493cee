//! Symmetric eigendecomposition (cyclic Jacobi), PSD square roots and the
//! orthogonal polar factor (one-sided Jacobi SVD).

use super::Matrix;
use crate::error::{Error, Result};

/// Eigenvalues within this (scaled) distance below zero are rounded to zero.
pub const PSD_CLAMP: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Only the lower
/// triangle's symmetrized value is used.
pub fn symmetric_eigen(c: &Matrix) -> Result<SymmetricEigen> {
    let n = c.require_square("symmetric eigenproblem operand")?;
    let mut a = c.symmetrized();
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total = a.frobenius_norm().powi(2);
        if off <= (f64::EPSILON * f64::EPSILON) * total || off == 0.0 {
            return Ok(sorted(a, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    Err(Error::Numerical("Jacobi eigenvalue sweeps did not converge".into()))
}

fn sorted(a: Matrix, v: Matrix) -> SymmetricEigen {
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = v[(k, old)];
        }
    }
    SymmetricEigen {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors,
    }
}

fn check_symmetric(c: &Matrix) -> Result<()> {
    c.require_square("covariance")?;
    let asym = c.asymmetry();
    if asym > SYMMETRY_TOL * c.frobenius_norm().max(1.0) {
        return Err(Error::Domain(format!(
            "matrix not symmetric (|C - C^T|_F = {asym:e})"
        )));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric PSD matrix with roundoff negatives clamped to 0.
pub fn psd_eigen(c: &Matrix) -> Result<SymmetricEigen> {
    check_symmetric(c)?;
    let mut e = symmetric_eigen(c)?;
    let floor = -PSD_CLAMP * c.frobenius_norm().max(1.0);
    for l in e.values.iter_mut() {
        if *l < floor {
            return Err(Error::NotPsd(format!("eigenvalue {l:e}")));
        }
        *l = l.max(0.0);
    }
    Ok(e)
}

/// Symmetric PSD square root.
pub fn psd_sqrt(c: &Matrix) -> Result<Matrix> {
    let e = psd_eigen(c)?;
    Ok(spectral_function(&e, f64::sqrt))
}

/// `V f(Λ) Vᵀ`.
pub fn spectral_function(e: &SymmetricEigen, f: impl Fn(f64) -> f64) -> Matrix {
    let n = e.values.len();
    let mut out = Matrix::zeros(n, n);
    let fv: Vec<f64> = e.values.iter().map(|&l| f(l)).collect();
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n)
                .map(|k| e.vectors[(i, k)] * fv[k] * e.vectors[(j, k)])
                .sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Orthogonal factor `W` of a polar decomposition `M = W P`, `P` symmetric PSD.
/// Any valid factor is returned when `M` is singular.
pub fn polar_orthogonal(m: &Matrix) -> Result<Matrix> {
    let n = m.require_square("polar operand")?;
    let mut u = m.clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return Ok(Matrix::identity(n));
    }

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    alpha += u[(k, i)] * u[(k, i)];
                    beta += u[(k, j)] * u[(k, j)];
                    gamma += u[(k, i)] * u[(k, j)];
                }
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let (ui, uj) = (u[(k, i)], u[(k, j)]);
                    u[(k, i)] = c * ui - s * uj;
                    u[(k, j)] = s * ui + c * uj;
                    let (vi, vj) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * vi - s * vj;
                    v[(k, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("one-sided Jacobi SVD did not converge".into()));
    }

    // normalize columns; complete the null part to an orthonormal basis
    let tiny = scale * f64::EPSILON * n as f64;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    let mut cols: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| u[(k, j)].powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    for &j in &order {
        if norms[j] > tiny {
            let mut col: Vec<f64> = (0..n).map(|k| u[(k, j)] / norms[j]).collect();
            // re-orthogonalize against accepted columns
            for b in &basis {
                let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
                col.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let nn = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nn > 0.5 {
                col.iter_mut().for_each(|x| *x /= nn);
                basis.push(col.clone());
                cols[j] = Some(col);
                continue;
            }
        }
        missing.push(j);
    }
    let mut e = 0;
    for j in missing {
        loop {
            if e >= n {
                return Err(Error::Numerical("basis completion failed".into()));
            }
            let mut col = vec![0.0; n];
            col[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for b in &basis {
                    let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
                    col.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            let nn = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nn > 1e-3 {
                col.iter_mut().for_each(|x| *x /= nn);
                basis.push(col.clone());
                cols[j] = Some(col);
                break;
            }
        }
    }
    let mut uu = Matrix::zeros(n, n);
    for (j, col) in cols.into_iter().enumerate() {
        let col = col.expect("every column assigned");
        for k in 0..n {
            uu[(k, j)] = col[k];
        }
    }
    Ok(&uu * &v.transpose())
}
