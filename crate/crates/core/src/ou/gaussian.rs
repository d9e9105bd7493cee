use super::OUSystem;
use crate::error::{Error, Result};
use crate::linalg::{mat_exp, psd_eigen, Matrix};

/// `N(mean, cov)` with a symmetric positive semidefinite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianLaw {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite mean".into()));
        }
        psd_eigen(&cov)?;
        Ok(Self {
            mean,
            cov: cov.symmetrized(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `e^{-At}`.
pub fn propagator(sys: &OUSystem, t: f64) -> Result<Matrix> {
    check_time(t)?;
    mat_exp(sys.neg_a(), t)
}

/// `Σ_t = ∫₀ᵗ e^{-As} σσᵀ e^{-Aᵀs} ds`.
pub fn sigma_t(sys: &OUSystem, t: f64) -> Result<Matrix> {
    check_time(t)?;
    Ok(covariance_and_propagator(sys.a(), sys.diffusion(), t)?.0)
}

/// `(∫₀ᵗ e^{-As} Q e^{-Aᵀs} ds, e^{-At})`.
///
/// A Van Loan block exponential gives the integral over a base step `h` with
/// `‖A‖h <= 1`; `t = 2ᵏ h` is then reached by `Σ_{2h} = Σ_h + e^{-Ah} Σ_h e^{-Aᵀh}`,
/// which never forms the growing factor `e^{Aᵀt}`.
pub(crate) fn covariance_and_propagator(a: &Matrix, q: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    let m = a.rows();
    if t == 0.0 {
        return Ok((Matrix::zeros(m, m), Matrix::identity(m)));
    }
    let norm = a.norm_one();
    let mut h = t;
    let mut doublings = 0u32;
    while h * norm > 1.0 && doublings < 2000 {
        h *= 0.5;
        doublings += 1;
    }

    let mut block = Matrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            block[(i, j)] = -a[(i, j)];
            block[(i, m + j)] = q[(i, j)];
            block[(m + i, m + j)] = a[(j, i)];
        }
    }
    let f = mat_exp(&block, h)?;
    let mut e = Matrix::zeros(m, m);
    let mut f12 = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            e[(i, j)] = f[(i, j)];
            f12[(i, j)] = f[(i, m + j)];
        }
    }
    let mut s = f12.mul_unchecked(&e.transpose()).symmetrized();
    for _ in 0..doublings {
        let pushed = e.mul_unchecked(&s).mul_unchecked(&e.transpose());
        s = (&s + &pushed).symmetrized();
        e = e.mul_unchecked(&e);
    }
    Ok((s, e))
}

/// `Σ_∞`, the solution of `A Σ + Σ Aᵀ = σσᵀ`. Cached on the system.
pub fn sigma_inf(sys: &OUSystem) -> Result<Matrix> {
    sys.cached_sigma_inf()
}

/// `A⁻¹ σ E[L₁]`, the mean of the invariant law.
pub fn stationary_mean(sys: &OUSystem) -> Vec<f64> {
    sys.stationary_mean.clone()
}

/// `E[X_t(0)] = A⁻¹(I - e^{-At}) σ E[L₁]`; `t = +∞` gives the stationary mean.
pub fn transient_mean(sys: &OUSystem, t: f64) -> Result<Vec<f64>> {
    if t == f64::INFINITY {
        return Ok(stationary_mean(sys));
    }
    check_time(t)?;
    let m_inf = &sys.stationary_mean;
    if m_inf.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; sys.dim()]);
    }
    // A⁻¹ commutes with e^{-At}
    let decayed = propagator(sys, t)?.matvec_unchecked(m_inf);
    Ok(m_inf.iter().zip(decayed).map(|(a, b)| a - b).collect())
}

/// Law of `X_t(x)` for Gaussian drivers (Brownian motion plus drift).
pub fn gaussian_marginal(sys: &OUSystem, x: &[f64], t: f64) -> Result<GaussianLaw> {
    sys.check_state(x)?;
    check_time(t)?;
    let g = sys.noise().gaussian_structure().ok_or_else(|| {
        Error::Unsupported("the marginal law is Gaussian only for Brownian or drift noise".into())
    })?;
    let m = sys.dim();
    let (cov, e) = if g.brownian {
        covariance_and_propagator(sys.a(), sys.diffusion(), t)?
    } else {
        (Matrix::zeros(m, m), propagator(sys, t)?)
    };
    let shift = transient_mean(sys, t)?;
    let mean = e
        .matvec_unchecked(x)
        .into_iter()
        .zip(shift)
        .map(|(a, b)| a + b)
        .collect();
    Ok(GaussianLaw { mean, cov })
}

/// The invariant law `N(A⁻¹σE[L₁], Σ_∞)` for Gaussian drivers.
pub fn stationary_law(sys: &OUSystem) -> Result<GaussianLaw> {
    let g = sys.noise().gaussian_structure().ok_or_else(|| {
        Error::Unsupported("the invariant law is Gaussian only for Brownian or drift noise".into())
    })?;
    let m = sys.dim();
    let cov = if g.brownian {
        sigma_inf(sys)?
    } else {
        Matrix::zeros(m, m)
    };
    Ok(GaussianLaw {
        mean: stationary_mean(sys),
        cov,
    })
}
