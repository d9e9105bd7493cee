//! Lévy drivers: increments and exact first moments.

use std::f64::consts::PI;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Jumps drawn per increment before giving up.
pub const MAX_JUMPS_PER_INCREMENT: u64 = 1_000_000;

/// Below this intensity Poisson counts are drawn by product inversion.
const SMALL_POISSON_MEAN: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    /// N(0, std² I).
    IsotropicGaussian { std: f64 },
    /// Discrete law on finitely many points.
    FixedAtoms {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Standard Brownian motion with identity covariance per unit time.
    Brownian { dim: usize },
    /// Independent symmetric α-stable coordinates, characteristic function
    /// `exp(-|scale·u|^α)` at unit time.
    AlphaStable { dim: usize, alpha: f64, scale: f64 },
    CompoundPoisson { dim: usize, rate: f64, jump: JumpLaw },
    Drift { gamma: Vec<f64> },
    Sum { parts: Vec<NoiseSpec> },
}

/// Decomposition of a Gaussian driver: optional standard Brownian part plus drift.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNoise {
    pub brownian: bool,
    pub drift: Vec<f64>,
}

impl NoiseSpec {
    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::Brownian { dim }
            | NoiseSpec::AlphaStable { dim, .. }
            | NoiseSpec::CompoundPoisson { dim, .. } => *dim,
            NoiseSpec::Drift { gamma } => gamma.len(),
            NoiseSpec::Sum { parts } => parts.first().map_or(0, NoiseSpec::dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match self {
            NoiseSpec::Brownian { dim } => {
                if *dim == 0 {
                    return bad("Brownian noise needs dim >= 1".into());
                }
            }
            NoiseSpec::AlphaStable { dim, alpha, scale } => {
                if *dim == 0 {
                    return bad("alpha-stable noise needs dim >= 1".into());
                }
                if !(*alpha > 1.0 && *alpha < 2.0) {
                    return bad(format!(
                        "alpha must lie in (1, 2) for a finite first moment, got {alpha}"
                    ));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad(format!("alpha-stable scale must be positive, got {scale}"));
                }
            }
            NoiseSpec::CompoundPoisson { dim, rate, jump } => {
                if *dim == 0 {
                    return bad("compound Poisson noise needs dim >= 1".into());
                }
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return bad(format!("jump rate must be finite and >= 0, got {rate}"));
                }
                match jump {
                    JumpLaw::IsotropicGaussian { std } => {
                        if !(*std >= 0.0 && std.is_finite()) {
                            return bad(format!("jump std must be finite and >= 0, got {std}"));
                        }
                    }
                    JumpLaw::FixedAtoms { points, weights } => {
                        if points.is_empty() || points.len() != weights.len() {
                            return bad("fixed atoms need one weight per point".into());
                        }
                        if points.iter().any(|p| p.len() != *dim) {
                            return bad(format!("atom dimension differs from dim = {dim}"));
                        }
                        if points.iter().flatten().any(|v| !v.is_finite()) {
                            return bad("non-finite atom".into());
                        }
                        if weights.iter().any(|w| !(*w >= 0.0)) {
                            return bad("atom weights must be nonnegative".into());
                        }
                        let total: f64 = weights.iter().sum();
                        if (total - 1.0).abs() > 1e-12 {
                            return bad(format!("atom weights sum to {total}, not 1"));
                        }
                    }
                }
            }
            NoiseSpec::Drift { gamma } => {
                if gamma.is_empty() {
                    return bad("drift vector is empty".into());
                }
                if gamma.iter().any(|g| !g.is_finite()) {
                    return bad("non-finite drift".into());
                }
            }
            NoiseSpec::Sum { parts } => {
                let Some(first) = parts.first() else {
                    return bad("empty noise sum".into());
                };
                for p in parts {
                    p.validate()?;
                    if p.dim() != first.dim() {
                        return Err(Error::Dimension(format!(
                            "noise sum mixes dimensions {} and {}",
                            first.dim(),
                            p.dim()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact `E[L₁]`.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            NoiseSpec::Brownian { dim } | NoiseSpec::AlphaStable { dim, .. } => vec![0.0; *dim],
            NoiseSpec::CompoundPoisson { dim, rate, jump } => match jump {
                JumpLaw::IsotropicGaussian { .. } => vec![0.0; *dim],
                JumpLaw::FixedAtoms { points, weights } => {
                    let mut m = vec![0.0; *dim];
                    for (p, w) in points.iter().zip(weights) {
                        for (mi, pi) in m.iter_mut().zip(p) {
                            *mi += rate * w * pi;
                        }
                    }
                    m
                }
            },
            NoiseSpec::Drift { gamma } => gamma.clone(),
            NoiseSpec::Sum { parts } => {
                let mut m = vec![0.0; self.dim()];
                for p in parts {
                    for (mi, pi) in m.iter_mut().zip(p.mean()) {
                        *mi += pi;
                    }
                }
                m
            }
        }
    }

    /// `Some` when the driver is a (possibly degenerate) Gaussian process:
    /// at most one standard Brownian part plus deterministic drifts.
    pub fn gaussian_structure(&self) -> Option<GaussianNoise> {
        let mut g = GaussianNoise {
            brownian: false,
            drift: vec![0.0; self.dim()],
        };
        fn visit(spec: &NoiseSpec, g: &mut GaussianNoise) -> bool {
            match spec {
                NoiseSpec::Brownian { .. } => !std::mem::replace(&mut g.brownian, true),
                NoiseSpec::Drift { gamma } => {
                    g.drift.iter_mut().zip(gamma).for_each(|(d, v)| *d += v);
                    true
                }
                NoiseSpec::Sum { parts } => parts.iter().all(|p| visit(p, g)),
                NoiseSpec::CompoundPoisson { rate, .. } => *rate == 0.0,
                NoiseSpec::AlphaStable { .. } => false,
            }
        }
        visit(self, &mut g).then_some(g)
    }

    /// Pure standard Brownian motion, no drift.
    pub fn is_pure_brownian(&self) -> bool {
        self.gaussian_structure()
            .is_some_and(|g| g.brownian && g.drift.iter().all(|&d| d == 0.0))
    }

    pub(crate) fn add_increment(&self, dt: f64, rng: &mut RngStream, acc: &mut [f64]) -> Result<()> {
        match self {
            NoiseSpec::Brownian { .. } => {
                let sd = dt.sqrt();
                let mut z = vec![0.0; acc.len()];
                rng.standard_normals(&mut z);
                acc.iter_mut().zip(z).for_each(|(a, v)| *a += sd * v);
            }
            NoiseSpec::AlphaStable { alpha, scale, .. } => {
                let s = scale * dt.powf(1.0 / alpha);
                for a in acc.iter_mut() {
                    *a += s * symmetric_stable(*alpha, rng);
                }
            }
            NoiseSpec::CompoundPoisson { rate, jump, dim } => {
                let count = poisson(rate * dt, rng)?;
                let mut z = vec![0.0; *dim];
                for _ in 0..count {
                    match jump {
                        JumpLaw::IsotropicGaussian { std } => {
                            rng.standard_normals(&mut z);
                            acc.iter_mut().zip(&z).for_each(|(a, v)| *a += std * v);
                        }
                        JumpLaw::FixedAtoms { points, weights } => {
                            let p = &points[categorical(weights, rng)];
                            acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
                        }
                    }
                }
            }
            NoiseSpec::Drift { gamma } => {
                acc.iter_mut().zip(gamma).for_each(|(a, g)| *a += g * dt);
            }
            NoiseSpec::Sum { parts } => {
                for p in parts {
                    p.add_increment(dt, rng, acc)?;
                }
            }
        }
        Ok(())
    }
}

/// One increment `L_{t+dt} - L_t`.
pub fn sample_increment(spec: &NoiseSpec, dt: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let mut out = vec![0.0; spec.dim()];
    spec.add_increment(dt, rng, &mut out)?;
    Ok(out)
}

pub fn noise_mean(spec: &NoiseSpec) -> Vec<f64> {
    spec.mean()
}

/// Chambers–Mallows–Stuck draw from the standard symmetric α-stable law.
fn symmetric_stable(alpha: f64, rng: &mut RngStream) -> f64 {
    let v = PI * (rng.uniform_open() - 0.5);
    let w = rng.exponential();
    let (sin_av, cos_v) = ((alpha * v).sin(), v.cos());
    sin_av / cos_v.powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

pub(crate) fn poisson(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let count = if mean < SMALL_POISSON_MEAN {
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut prod = rng.uniform_open();
        while prod > limit {
            k += 1;
            prod *= rng.uniform_open();
        }
        k
    } else {
        if mean > 2.0 * MAX_JUMPS_PER_INCREMENT as f64 {
            return Err(Error::Domain(format!(
                "expected {mean:e} jumps per increment exceeds the limit of {MAX_JUMPS_PER_INCREMENT}"
            )));
        }
        let dist = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
        dist.sample(rng) as u64
    };
    if count > MAX_JUMPS_PER_INCREMENT {
        return Err(Error::Domain(format!(
            "{count} jumps in one increment exceeds the limit of {MAX_JUMPS_PER_INCREMENT}"
        )));
    }
    Ok(count)
}

pub(crate) fn categorical(weights: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform_open();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
