use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{norm2, polar_orthogonal, psd_sqrt, symmetric_eigen, Matrix, PSD_CLAMP};
use crate::ou::{gaussian_marginal, propagator, sigma_inf, sigma_t, stationary_law, GaussianLaw, OUSystem};

fn check_pair(p: &GaussianLaw, q: &GaussianLaw) -> Result<()> {
    if p.dim() != q.dim() || p.cov.rows() != p.dim() || q.cov.rows() != q.dim() {
        return Err(Error::Dimension(format!(
            "Gaussian laws of dimension {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Bures distance `min_U ‖C₁^{1/2} - C₂^{1/2} U‖_F` over orthogonal `U`.
///
/// Equal to `(Tr(C₁ + C₂ - 2(C₁^{1/2} C₂ C₁^{1/2})^{1/2}))^{1/2}` but computed
/// without the cancellation that formula suffers when the distance is small
/// relative to the covariances.
pub fn bures_distance(c1: &Matrix, c2: &Matrix) -> Result<f64> {
    let s1 = psd_sqrt(c1)?;
    let s2 = psd_sqrt(c2)?;
    // optimal U is the transpose of the orthogonal polar factor of S₁S₂
    let w = polar_orthogonal(&s1.mul_unchecked(&s2))?;
    let diff = &s1 - &s2.mul_unchecked(&w.transpose());
    Ok(diff.frobenius_norm())
}

/// `W₂(N(m₁, C₁), N(m₂, C₂)) = (|m₁ - m₂|² + B(C₁, C₂)²)^{1/2}`.
pub fn w2_gaussian(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    check_pair(p, q)?;
    let d: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let b = bures_distance(&p.cov, &q.cov)?;
    Ok(norm2(&d).hypot(b))
}

/// The same distance through the literal trace formula, with the trace term
/// clamped at zero when roundoff drives it slightly negative.
pub fn w2_gaussian_trace(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    check_pair(p, q)?;
    let s1 = psd_sqrt(&p.cov)?;
    let inner = s1.mul_unchecked(&q.cov).mul_unchecked(&s1).symmetrized();
    let cross = psd_sqrt(&inner)?;
    let mut tr = p.cov.trace() + q.cov.trace() - 2.0 * cross.trace();
    let floor = -PSD_CLAMP * (p.cov.trace() + q.cov.trace()).max(1.0);
    if tr < floor {
        return Err(Error::Numerical(format!("negative Bures trace term {tr:e}")));
    }
    tr = tr.max(0.0);
    let d: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    Ok((norm2(&d).powi(2) + tr).sqrt())
}

/// Orthonormal eigenbasis of a normal matrix. Symmetric matrices use the
/// real Jacobi eigenvectors; otherwise the complex eigenvectors are
/// re-orthonormalized within clusters of equal eigenvalues.
fn normal_eigenbasis(sys: &OUSystem) -> Vec<(Complex64, Vec<Complex64>)> {
    if sys.is_symmetric() {
        let e = symmetric_eigen(&sys.a().symmetrized()).expect("square matrix");
        let m = sys.dim();
        return (0..m)
            .map(|j| {
                let v = (0..m).map(|i| Complex64::new(e.vectors[(i, j)], 0.0)).collect();
                (Complex64::new(e.values[j], 0.0), v)
            })
            .collect();
    }
    let spec = sys.spectral();
    let tol = spec.distinct_threshold;
    let mut basis: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(spec.dim());
    for (lambda, v) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let mut w = v.clone();
        for (mu, u) in &basis {
            if (lambda - mu).norm() <= tol {
                let proj: Complex64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                w.iter_mut().zip(u).for_each(|(b, a)| *b -= proj * a);
            }
        }
        let n = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        w.iter_mut().for_each(|c| *c /= n);
        basis.push((*lambda, w));
    }
    basis
}

/// Closed-form `W₂(X_t(x), μ)` for normal `A`, `σ = I` and Brownian noise:
///
/// `W₂² = Σ_j e^{-2 Re λ_j t} |⟨x, v_j⟩|² + Σ_j e^{-4 Re λ_j t} / (2 Re λ_j (√(1 - e^{-2 Re λ_j t}) + 1)²)`
///
/// with `v_j` orthonormal and every eigenvalue (each member of a conjugate
/// pair) counted once.
pub fn w2_normal_spectral(sys: &OUSystem, x: &[f64], t: f64) -> Result<f64> {
    sys.check_state(x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    if !sys.is_normal() {
        return Err(Error::Unsupported(
            "the spectral formula needs a normal drift matrix; use w2_gaussian".into(),
        ));
    }
    let m = sys.dim();
    if sys.sigma().rows() != m || sys.sigma().cols() != m || *sys.sigma() != Matrix::identity(m) {
        return Err(Error::Unsupported(
            "the spectral formula needs sigma = I; use w2_gaussian".into(),
        ));
    }
    if !sys.noise().is_pure_brownian() {
        return Err(Error::Unsupported(
            "the spectral formula needs pure Brownian noise; use w2_gaussian".into(),
        ));
    }
    let mut total = 0.0;
    for (lambda, v) in normal_eigenbasis(sys) {
        let r = lambda.re;
        let proj: Complex64 = v.iter().zip(x).map(|(a, b)| a.conj() * b).sum();
        let decay = (-2.0 * r * t).exp();
        let root = (-(-2.0 * r * t).exp_m1()).sqrt();
        let noise = decay * decay / (2.0 * r * (root + 1.0).powi(2));
        total += decay * proj.norm_sqr() + noise;
    }
    Ok(total.sqrt())
}

/// The two closed forms a commuting-covariance shortcut can take, next to the
/// exact trace formula.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutingDiagnostic {
    /// Exact `W₂(X_t(x), μ)`.
    pub exact: f64,
    /// `(|e^{-At}x|² + ‖Σ_t^{1/2} - Σ_∞^{1/2}‖_F²)^{1/2}`.
    pub frobenius_form: f64,
    /// `(|e^{-At}x|² + m ‖Σ_t^{1/2} - Σ_∞^{1/2}‖_F²)^{1/2}`.
    pub dimension_scaled_form: f64,
    /// Whether `Σ_t` and `Σ_∞` commute (relative tolerance 1e-9).
    pub commute: bool,
}

/// Compares the exact distance with the square-root-difference shortcuts.
pub fn commuting_diagnostic(sys: &OUSystem, x: &[f64], t: f64) -> Result<CommutingDiagnostic> {
    let law = gaussian_marginal(sys, x, t)?;
    let inf = stationary_law(sys)?;
    let exact = w2_gaussian(&law, &inf)?;
    let st = sigma_t(sys, t)?;
    let si = sigma_inf(sys)?;
    let diff = (&psd_sqrt(&st)? - &psd_sqrt(&si)?).frobenius_norm();
    let shift = norm2(&propagator(sys, t)?.matvec_unchecked(x));
    let comm = &st.mul_unchecked(&si) - &si.mul_unchecked(&st);
    let scale = st.frobenius_norm() * si.frobenius_norm();
    Ok(CommutingDiagnostic {
        exact,
        frobenius_form: shift.hypot(diff),
        dimension_scaled_form: (shift * shift + sys.dim() as f64 * diff * diff).sqrt(),
        commute: comm.frobenius_norm() <= 1e-9 * scale.max(f64::MIN_POSITIVE),
    })
}
