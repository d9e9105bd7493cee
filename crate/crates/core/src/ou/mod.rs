//! The OU system `dX = -A X dt + σ dL`: validation, Gaussian laws, simulation.

mod gaussian;
mod modal;
mod simulate;

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

pub use gaussian::{
    gaussian_marginal, propagator, sigma_inf, sigma_t, stationary_law, stationary_mean,
    transient_mean, GaussianLaw,
};
pub use modal::ModalBasis;
pub use simulate::{
    burn_in_horizon, default_step, paths_to_csv, sample_marginal, sample_stationary,
    samples_to_csv, simulate_path, simulate_path_with, simulate_paths, MarginalSampler,
    SamplePath, SamplingMethod, Scheme, Stepper, BLOW_UP_NORM, BURN_IN_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::linalg::{self, eig_with_tolerance, ComplexEigenSystem, Matrix, DEFAULT_DISTINCT_TOL};
use crate::noise::NoiseSpec;

/// A validated OU system. Immutable once built; derived quantities are
/// computed on first use and shared.
#[derive(Debug)]
pub struct OUSystem {
    a: Matrix,
    neg_a: Matrix,
    sigma: Matrix,
    noise: NoiseSpec,
    spectral: ComplexEigenSystem,
    /// `σ σᵀ`.
    q: Matrix,
    a_inv: Matrix,
    drive_mean: Vec<f64>,
    stationary_mean: Vec<f64>,
    modal: Option<ModalBasis>,
    sigma_inf: OnceLock<Result<Matrix>>,
    steppers: Mutex<Vec<(u64, Scheme, Arc<Stepper>)>>,
}

impl Clone for OUSystem {
    fn clone(&self) -> Self {
        Self {
            a: self.a.clone(),
            neg_a: self.neg_a.clone(),
            sigma: self.sigma.clone(),
            noise: self.noise.clone(),
            spectral: self.spectral.clone(),
            q: self.q.clone(),
            a_inv: self.a_inv.clone(),
            drive_mean: self.drive_mean.clone(),
            stationary_mean: self.stationary_mean.clone(),
            modal: self.modal.clone(),
            sigma_inf: self.sigma_inf.clone(),
            steppers: Mutex::new(Vec::new()),
        }
    }
}

/// Validates dimensions, the noise, and positive stability of `A`.
pub fn build_system(a: Matrix, sigma: Matrix, noise: NoiseSpec) -> Result<OUSystem> {
    build_system_with_tolerance(a, sigma, noise, DEFAULT_DISTINCT_TOL)
}

/// [`build_system`] with an explicit eigenvalue distinctness tolerance.
pub fn build_system_with_tolerance(
    a: Matrix,
    sigma: Matrix,
    noise: NoiseSpec,
    distinct_tol: f64,
) -> Result<OUSystem> {
    let m = a.require_square("drift matrix A")?;
    if sigma.rows() != m {
        return Err(Error::Dimension(format!(
            "sigma has {} rows but A is {m}x{m}",
            sigma.rows()
        )));
    }
    noise.validate()?;
    if noise.dim() != sigma.cols() {
        return Err(Error::Dimension(format!(
            "noise dimension {} does not match the {} columns of sigma",
            noise.dim(),
            sigma.cols()
        )));
    }
    let spectral = eig_with_tolerance(&a, distinct_tol)?;
    if let Some(bad) = spectral
        .eigenvalues
        .iter()
        .filter(|l| l.re <= linalg::STABILITY_MARGIN)
        .min_by(|x, y| x.re.total_cmp(&y.re))
    {
        return Err(Error::NotHurwitz {
            eigenvalue: *bad,
            margin: linalg::STABILITY_MARGIN,
        });
    }
    let a_inv = linalg::inverse(&a)?;
    let q = sigma.mul_unchecked(&sigma.transpose()).symmetrized();
    let drive_mean = sigma.matvec_unchecked(&noise.mean());
    let stationary_mean = a_inv.matvec_unchecked(&drive_mean);
    let modal = if spectral.distinct {
        ModalBasis::new(&spectral).ok()
    } else {
        None
    };
    Ok(OUSystem {
        neg_a: a.scale(-1.0),
        a,
        sigma,
        noise,
        spectral,
        q,
        a_inv,
        drive_mean,
        stationary_mean,
        modal,
        sigma_inf: OnceLock::new(),
        steppers: Mutex::new(Vec::new()),
    })
}

impl OUSystem {
    /// State dimension m.
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// Noise dimension n.
    pub fn noise_dim(&self) -> usize {
        self.sigma.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn spectral(&self) -> &ComplexEigenSystem {
        &self.spectral
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.spectral.eigenvalues
    }

    /// Always true: construction fails otherwise.
    pub fn is_hurwitz(&self) -> bool {
        true
    }

    pub fn is_generic(&self) -> bool {
        self.spectral.distinct
    }

    pub fn is_normal(&self) -> bool {
        self.spectral.normal
    }

    pub fn is_symmetric(&self) -> bool {
        self.a.asymmetry() <= 1e-12 * self.a.frobenius_norm().max(1.0)
    }

    /// `σ σᵀ`.
    pub fn diffusion(&self) -> &Matrix {
        &self.q
    }

    pub fn a_inverse(&self) -> &Matrix {
        &self.a_inv
    }

    /// `σ E[L₁]`.
    pub fn drive_mean(&self) -> &[f64] {
        &self.drive_mean
    }

    /// Smallest real part in the spectrum.
    pub fn rho_min(&self) -> f64 {
        self.spectral.min_real_part()
    }

    /// Eigenvector basis, present when the spectrum is generic and the
    /// basis is numerically invertible.
    pub fn modal(&self) -> Option<&ModalBasis> {
        self.modal.as_ref()
    }

    /// Rejects states of the wrong length or with non-finite entries.
    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "state has length {} but the system has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state has non-finite entries".into()));
        }
        Ok(())
    }

    pub(crate) fn neg_a(&self) -> &Matrix {
        &self.neg_a
    }

    pub(crate) fn cached_sigma_inf(&self) -> Result<Matrix> {
        self.sigma_inf
            .get_or_init(|| linalg::lyapunov_solve(&self.a, &self.q))
            .clone()
    }

    /// The one-step map for step `h`, built once per `(h, scheme)`.
    pub fn stepper(&self, h: f64, scheme: Scheme) -> Result<Arc<Stepper>> {
        let key = h.to_bits();
        {
            let cache = self.steppers.lock().expect("stepper cache poisoned");
            if let Some((_, _, s)) = cache.iter().find(|(k, sc, _)| *k == key && *sc == scheme) {
                return Ok(Arc::clone(s));
            }
        }
        let s = Arc::new(Stepper::new(self, h, scheme)?);
        let mut cache = self.steppers.lock().expect("stepper cache poisoned");
        if cache.len() >= 32 {
            cache.remove(0);
        }
        cache.push((key, scheme, Arc::clone(&s)));
        Ok(s)
    }
}

/// Stability of `A`, `B` and `A + B`, and whether `A` and `B` commute.
#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzSumReport {
    pub a_stable: bool,
    pub b_stable: bool,
    pub each_stable: bool,
    pub commute: bool,
    pub sum_stable: bool,
    pub sum_eigenvalues: Vec<Complex64>,
}

pub fn hurwitz_sum_check(a: &Matrix, b: &Matrix) -> Result<HurwitzSumReport> {
    let m = a.require_square("A")?;
    if b.rows() != m || b.cols() != m {
        return Err(Error::Dimension(format!(
            "B must be {m}x{m}, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    let stable = |mat: &Matrix| -> Result<(bool, Vec<Complex64>)> {
        let mut ev = linalg::eig(mat)?.eigenvalues;
        ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        Ok((ev.iter().all(|l| l.re > linalg::STABILITY_MARGIN), ev))
    };
    let (a_stable, _) = stable(a)?;
    let (b_stable, _) = stable(b)?;
    let (sum_stable, sum_eigenvalues) = stable(&(a + b))?;
    let commutator = &(a * b) - &(b * a);
    let commute = commutator.frobenius_norm()
        <= 1e-12 * (a.frobenius_norm() * b.frobenius_norm()).max(f64::MIN_POSITIVE);
    Ok(HurwitzSumReport {
        a_stable,
        b_stable,
        each_stable: a_stable && b_stable,
        commute,
        sum_stable,
        sum_eigenvalues,
    })
}
