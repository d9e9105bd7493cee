//! Benchmark systems: the damped harmonic oscillator under Brownian forcing
//! and the Jacobi chain of coupled oscillators with heat baths at both ends.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu::ComplexLu;
use crate::linalg::Matrix;
use crate::noise::NoiseSpec;
use crate::ou::{build_system, gaussian_marginal, stationary_law, OUSystem};
use crate::wasserstein::w2_gaussian;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `ẍ + γẋ + κx = ς·noise`, written for `(x, -ẋ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorParams {
    pub kappa: f64,
    pub gamma: f64,
    pub varsigma: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self { kappa: 1.0, gamma: 0.1, varsigma: 1.0 }
    }
}

impl OscillatorParams {
    /// `Δ = γ² - 4κ`.
    pub fn discriminant(&self) -> f64 {
        self.gamma * self.gamma - 4.0 * self.kappa
    }

    pub fn is_subcritical(&self) -> bool {
        self.discriminant() < 0.0
    }

    fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        positive("varsigma", self.varsigma)?;
        if !self.gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be finite, got {}", self.gamma)));
        }
        Ok(())
    }

    fn require_subcritical(&self) -> Result<()> {
        if self.is_subcritical() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "only subcritical damping (gamma^2 < 4 kappa) is covered, discriminant = {}",
                self.discriminant()
            )))
        }
    }
}

/// `A = [[0, -1], [κ, γ]]`, `σ = [[0, 0], [0, ς]]`, two-dimensional Brownian driver.
/// A non-positive friction fails the stability check.
pub fn oscillator_system(p: &OscillatorParams) -> Result<OUSystem> {
    p.validate()?;
    let a = Matrix::from_rows(&[vec![0.0, -1.0], vec![p.kappa, p.gamma]])?;
    let sigma = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, p.varsigma]])?;
    build_system(a, sigma, NoiseSpec::Brownian { dim: 2 })
}

/// Off-diagonal entry of `Σ_t` for the subcritical oscillator,
/// `ς² e^{-γt}(cos(√|Δ| t) - 1)/Δ`.
pub fn oscillator_sigma12_closed(p: &OscillatorParams, t: f64) -> Result<f64> {
    p.validate()?;
    p.require_subcritical()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    let d = p.discriminant();
    let wave = ((-d).sqrt() * t).cos() - 1.0;
    Ok(p.varsigma * p.varsigma * (-p.gamma * t).exp() * wave / d)
}

/// `e^{2γt}·W₂²(X_t(0), μ)` on the given times.
pub fn oscillator_band_curve(p: &OscillatorParams, t_grid: &[f64]) -> Result<Vec<f64>> {
    p.require_subcritical()?;
    let sys = oscillator_system(p)?;
    let target = stationary_law(&sys)?;
    t_grid
        .iter()
        .map(|&t| {
            let w = w2_gaussian(&gaussian_marginal(&sys, &[0.0, 0.0], t)?, &target)?;
            Ok((2.0 * p.gamma * t).exp() * w * w)
        })
        .collect()
}

/// Chain of `m` oscillators, momenta first: `X = (p₁..p_m, q₁..q_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobiParams {
    pub m: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub varsigma_1: f64,
    pub varsigma_m: f64,
}

impl Default for JacobiParams {
    fn default() -> Self {
        Self { m: 5, kappa: 1.0, gamma: 0.01, varsigma_1: 1.0, varsigma_m: 1.0 }
    }
}

impl JacobiParams {
    /// Without pinning the chain may fail to be stable.
    pub fn pinning_free(&self) -> bool {
        self.gamma == 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Domain(format!("chain needs m >= 2 oscillators, got {}", self.m)));
        }
        positive("kappa", self.kappa)?;
        positive("varsigma_1", self.varsigma_1)?;
        positive("varsigma_m", self.varsigma_m)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Drift matrix of the chain: friction `ς₁, ς_m` on the outer momenta,
/// stiffness block `K` (tridiagonal, `κ+γ` at the ends, `2κ+γ` inside,
/// `-κ` off the diagonal) and `-I` below.
pub fn jacobi_matrix(p: &JacobiParams) -> Result<Matrix> {
    p.validate()?;
    let m = p.m;
    let mut a = Matrix::zeros(2 * m, 2 * m);
    a[(0, 0)] = p.varsigma_1;
    a[(m - 1, m - 1)] = p.varsigma_m;
    for i in 0..m {
        let ends = i == 0 || i == m - 1;
        a[(i, m + i)] = if ends { p.kappa + p.gamma } else { 2.0 * p.kappa + p.gamma };
        if i + 1 < m {
            a[(i, m + i + 1)] = -p.kappa;
            a[(i + 1, m + i)] = -p.kappa;
        }
        a[(m + i, i)] = -1.0;
    }
    Ok(a)
}

/// `2m x 2` dispersion with independent forcing `ς₁`, `ς_m` on the outer momenta.
pub fn jacobi_dispersion(p: &JacobiParams) -> Result<Matrix> {
    p.validate()?;
    let mut s = Matrix::zeros(2 * p.m, 2);
    s[(0, 0)] = p.varsigma_1;
    s[(p.m - 1, 1)] = p.varsigma_m;
    Ok(s)
}

/// Chain driven by a two-dimensional Brownian motion.
pub fn jacobi_system(p: &JacobiParams) -> Result<OUSystem> {
    jacobi_system_with_noise(p, NoiseSpec::Brownian { dim: 2 })
}

/// Chain driven by any two-dimensional noise (one component per bath).
pub fn jacobi_system_with_noise(p: &JacobiParams, noise: NoiseSpec) -> Result<OUSystem> {
    build_system(jacobi_matrix(p)?, jacobi_dispersion(p)?, noise)
}

/// `|det(A - λI)|` divided by the product of the row norms of `A - λI`
/// (Hadamard's bound), so the value lies in `[0, 1]` and is tiny at an
/// eigenvalue.
pub fn characteristic_residual(a: &Matrix, lambda: Complex64) -> Result<f64> {
    let n = a.require_square("characteristic polynomial")?;
    let mut entries = Vec::with_capacity(n * n);
    let mut hadamard = 1.0;
    for i in 0..n {
        let mut row_sq = 0.0;
        for j in 0..n {
            let v = Complex64::new(a[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            row_sq += v.norm_sqr();
            entries.push(v);
        }
        hadamard *= row_sq.sqrt();
    }
    if hadamard == 0.0 {
        return Ok(0.0);
    }
    let lu = ComplexLu::factor_perturbed(n, entries, 0.0);
    let det = lu.determinant().norm();
    Ok(if det.is_finite() { det / hadamard } else { 0.0 })
}
