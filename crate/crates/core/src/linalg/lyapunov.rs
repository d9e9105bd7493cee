use super::{eig, lu, Matrix};
use crate::error::{Error, Result};

/// Real parts at or below this margin fail the positive-stability check.
pub const STABILITY_MARGIN: f64 = 1e-10;

/// Solves `A Σ + Σ Aᵀ = Q` for positively stable `A` through the
/// `m² x m²` Kronecker system `(I ⊗ A + A ⊗ I) vec Σ = vec Q`.
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let m = a.require_square("Lyapunov drift")?;
    if q.rows() != m || q.cols() != m {
        return Err(Error::Dimension(format!(
            "Lyapunov right-hand side must be {m}x{m}, got {}x{}",
            q.rows(),
            q.cols()
        )));
    }
    if q.asymmetry() > 1e-10 * q.frobenius_norm().max(1.0) {
        return Err(Error::Domain("Lyapunov right-hand side is not symmetric".into()));
    }
    let spectrum = eig::eigenvalues(a)?;
    if let Some(bad) = spectrum
        .iter()
        .filter(|l| l.re <= STABILITY_MARGIN)
        .min_by(|x, y| x.re.total_cmp(&y.re))
    {
        return Err(Error::NotHurwitz {
            eigenvalue: *bad,
            margin: STABILITY_MARGIN,
        });
    }

    // column-major vec: index(i, j) = i + m j
    let dim = m * m;
    let mut k = Matrix::zeros(dim, dim);
    for j in 0..m {
        for i in 0..m {
            let row = i + m * j;
            // (A Σ)_{ij} = Σ_l A_il Σ_lj
            for l in 0..m {
                k[(row, l + m * j)] += a[(i, l)];
            }
            // (Σ Aᵀ)_{ij} = Σ_l Σ_il A_jl
            for l in 0..m {
                k[(row, i + m * l)] += a[(j, l)];
            }
        }
    }
    let rhs: Vec<f64> = (0..dim).map(|r| q[(r % m, r / m)]).collect();
    let factor = lu::Lu::factor(&k)
        .map_err(|_| Error::Numerical("singular Kronecker system in Lyapunov solve".into()))?;
    let x = factor.solve_vec(&rhs);
    let mut sigma = Matrix::zeros(m, m);
    for (r, v) in x.into_iter().enumerate() {
        sigma[(r % m, r / m)] = v;
    }
    Ok(sigma.symmetrized())
}

pub fn lyapunov_residual(a: &Matrix, sigma: &Matrix, q: &Matrix) -> f64 {
    let lhs = &(a * sigma) + &(sigma * &a.transpose());
    (&lhs - q).frobenius_norm()
}
