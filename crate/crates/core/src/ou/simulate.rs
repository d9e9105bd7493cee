use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gaussian::{covariance_and_propagator, propagator, sigma_inf, stationary_mean, transient_mean};
use super::OUSystem;
use crate::error::{Error, Result};
use crate::format::csv_row;
use crate::linalg::{norm2, psd_sqrt, Matrix};
use crate::noise::{categorical, poisson, JumpLaw, NoiseSpec};
use crate::rng::RngStream;

/// Paths whose Euclidean norm exceeds this are reported as blown up.
pub const BLOW_UP_NORM: f64 = 1e12;

/// Burn-in horizons satisfy `e^{-ρ_min T*} <= BURN_IN_TOLERANCE`.
pub const BURN_IN_TOLERANCE: f64 = 1e-6;

/// Default step is this fraction of `1/‖A‖₁`.
const STEP_SCALE: f64 = 0.25;

/// One-step discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact Gaussian transitions for Gaussian drivers, exponential Euler otherwise.
    #[default]
    Auto,
    /// `X' = e^{-Ah} X + shift + ξ`, `ξ ~ N(0, Σ_h)`; Gaussian drivers only.
    ExactGaussian,
    /// `X' = e^{-Ah} X + A⁻¹(I - e^{-Ah}) σ ΔL / h`. Exact in mean and
    /// unconditionally stable.
    ExponentialEuler,
    /// `X' = X - h A X + σ ΔL`.
    EulerMaruyama,
}

/// A time-discretized path of `X_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
}

/// Precomputed one-step map for a fixed step size.
#[derive(Debug)]
pub struct Stepper {
    h: f64,
    scheme: Scheme,
    transition: Matrix,
    injection: Option<Matrix>,
    shift: Vec<f64>,
    root: Option<Matrix>,
    noise: NoiseSpec,
}

impl Stepper {
    pub fn new(sys: &OUSystem, h: f64, scheme: Scheme) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("step size must be positive, got {h}")));
        }
        let m = sys.dim();
        let gaussian = sys.noise().gaussian_structure();
        let scheme = match scheme {
            Scheme::Auto if gaussian.is_some() => Scheme::ExactGaussian,
            Scheme::Auto => Scheme::ExponentialEuler,
            s => s,
        };
        let mut stepper = Stepper {
            h,
            scheme,
            transition: Matrix::identity(m),
            injection: None,
            shift: vec![0.0; m],
            root: None,
            noise: sys.noise().clone(),
        };
        match scheme {
            Scheme::ExactGaussian => {
                let g = gaussian.ok_or_else(|| {
                    Error::Unsupported("exact transitions need Brownian or drift noise".into())
                })?;
                if g.brownian {
                    let (cov, e) = covariance_and_propagator(sys.a(), sys.diffusion(), h)?;
                    stepper.root = Some(psd_sqrt(&cov)?);
                    stepper.transition = e;
                } else {
                    stepper.transition = propagator(sys, h)?;
                }
                stepper.shift = transient_mean(sys, h)?;
            }
            Scheme::ExponentialEuler => {
                let e = propagator(sys, h)?;
                let gain = sys
                    .a_inverse()
                    .mul_unchecked(&(&Matrix::identity(m) - &e))
                    .scale(1.0 / h);
                stepper.injection = Some(gain.mul_unchecked(sys.sigma()));
                stepper.transition = e;
            }
            Scheme::EulerMaruyama => {
                stepper.transition = &Matrix::identity(m) - &sys.a().scale(h);
                stepper.injection = Some(sys.sigma().clone());
            }
            Scheme::Auto => unreachable!(),
        }
        Ok(stepper)
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// The resolved scheme (never `Auto`).
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Linear part of the step.
    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    /// Matrix applied to the noise increment, if the scheme samples increments.
    pub fn injection(&self) -> Option<&Matrix> {
        self.injection.as_ref()
    }

    /// Deterministic shift added each step.
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Square root of the one-step covariance, for exact Gaussian steps.
    pub fn noise_root(&self) -> Option<&Matrix> {
        self.root.as_ref()
    }

    /// Writes one step from `x` into `out`.
    pub fn advance(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        self.transition.matvec_into(x, out);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
        if let Some(root) = &self.root {
            scratch.resize(root.cols(), 0.0);
            rng.standard_normals(scratch);
            add_matvec(root, scratch, out);
        }
        if let Some(inj) = &self.injection {
            scratch.clear();
            scratch.resize(inj.cols(), 0.0);
            self.noise.add_increment(self.h, rng, scratch)?;
            if scratch.iter().any(|&v| v != 0.0) {
                add_matvec(inj, scratch, out);
            }
        }
        Ok(())
    }
}

fn add_matvec(m: &Matrix, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += m.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn check_blow_up(x: &[f64], step: usize) -> Result<()> {
    let norm = norm2(x);
    if !(norm <= BLOW_UP_NORM) {
        return Err(Error::BlowUp { step, norm });
    }
    Ok(())
}

/// `STEP_SCALE / ‖A‖₁`, the step used when the caller does not choose one.
pub fn default_step(sys: &OUSystem) -> f64 {
    STEP_SCALE / sys.a().norm_one().max(f64::MIN_POSITIVE)
}

/// `T*` with `e^{-ρ_min T*} = BURN_IN_TOLERANCE`.
pub fn burn_in_horizon(sys: &OUSystem) -> f64 {
    -BURN_IN_TOLERANCE.ln() / sys.rho_min()
}

/// Path with the default scheme: exact Gaussian transitions for Gaussian
/// drivers, exponential Euler for jump drivers.
pub fn simulate_path(
    sys: &OUSystem,
    x: &[f64],
    t_end: f64,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<SamplePath> {
    simulate_path_with(sys, x, t_end, n_steps, Scheme::Auto, rng)
}

pub fn simulate_path_with(
    sys: &OUSystem,
    x: &[f64],
    t_end: f64,
    n_steps: usize,
    scheme: Scheme,
    rng: &mut RngStream,
) -> Result<SamplePath> {
    sys.check_state(x)?;
    if n_steps == 0 {
        return Err(Error::Domain("a path needs at least one step".into()));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!("end time must be positive, got {t_end}")));
    }
    let h = t_end / n_steps as f64;
    let stepper = sys.stepper(h, scheme)?;
    let (seed, stream) = (rng.seed(), rng.stream());
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(x.to_vec());
    let mut scratch = Vec::new();
    for k in 1..=n_steps {
        let mut next = vec![0.0; x.len()];
        stepper.advance(&states[k - 1], rng, &mut next, &mut scratch)?;
        check_blow_up(&next, k)?;
        states.push(next);
        times.push(if k == n_steps { t_end } else { k as f64 * h });
    }
    Ok(SamplePath { times, states, seed, stream })
}

/// `n_paths` independent paths; path `i` uses `rng.fork(i)`.
pub fn simulate_paths(
    sys: &OUSystem,
    x: &[f64],
    t_end: f64,
    n_steps: usize,
    n_paths: usize,
    scheme: Scheme,
    rng: &RngStream,
) -> Result<Vec<SamplePath>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path_with(sys, x, t_end, n_steps, scheme, &mut rng.fork(i)))
        .collect()
}

/// How a [`MarginalSampler`] draws `X_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingMethod {
    /// Exact Gaussian law.
    ExactGaussian,
    /// Exact in law: jumps at uniform times pushed through the modal expansion.
    ModalJumps,
    /// Time-stepping with the given scheme.
    Path { scheme: Scheme, step: f64, steps: usize },
}

#[derive(Debug)]
enum Inner {
    Gaussian { root: Option<Matrix> },
    Modal(ModalJumps),
    Path { stepper: Arc<Stepper>, steps: usize },
}

/// Sampler for the law of `X_t(x)` at a fixed time.
#[derive(Debug)]
pub struct MarginalSampler<'a> {
    sys: &'a OUSystem,
    t: f64,
    propagator: Matrix,
    /// Deterministic part of `X_t(0)` not produced by the random terms.
    shift: Vec<f64>,
    method: SamplingMethod,
    inner: Inner,
}

impl<'a> MarginalSampler<'a> {
    /// Picks the exact Gaussian law, the exact jump representation, or
    /// exponential Euler stepping, in that order of preference.
    pub fn new(sys: &'a OUSystem, t: f64) -> Result<Self> {
        check_time(t)?;
        let m = sys.dim();
        let e = propagator(sys, t)?;
        if let Some(g) = sys.noise().gaussian_structure() {
            let root = if g.brownian && t > 0.0 {
                Some(psd_sqrt(&covariance_and_propagator(sys.a(), sys.diffusion(), t)?.0)?)
            } else {
                None
            };
            return Ok(Self {
                sys,
                t,
                propagator: e,
                shift: transient_mean(sys, t)?,
                method: SamplingMethod::ExactGaussian,
                inner: Inner::Gaussian { root },
            });
        }
        if let Some(parts) = decompose(sys.noise()) {
            if let Some(modal) = ModalJumps::new(sys, t, &parts)? {
                let drift = sys.sigma().matvec_unchecked(&parts.drift);
                let drift_decayed = e.matvec_unchecked(&drift);
                let shift = sys.a_inverse().matvec_unchecked(
                    &drift.iter().zip(&drift_decayed).map(|(a, b)| a - b).collect::<Vec<_>>(),
                );
                return Ok(Self {
                    sys,
                    t,
                    propagator: e,
                    shift,
                    method: SamplingMethod::ModalJumps,
                    inner: Inner::Modal(modal),
                });
            }
        }
        let steps = ((t / default_step(sys)).ceil() as usize).max(1);
        Self::with_path_scheme(sys, t, Scheme::ExponentialEuler, steps).map(|mut s| {
            s.shift = vec![0.0; m];
            s
        })
    }

    /// Forces time-stepping with `steps` equal steps.
    pub fn with_path_scheme(sys: &'a OUSystem, t: f64, scheme: Scheme, steps: usize) -> Result<Self> {
        check_time(t)?;
        if steps == 0 {
            return Err(Error::Domain("a path needs at least one step".into()));
        }
        let h = if t > 0.0 { t / steps as f64 } else { 1.0 };
        let stepper = sys.stepper(h, scheme)?;
        Ok(Self {
            sys,
            t,
            propagator: propagator(sys, t)?,
            shift: vec![0.0; sys.dim()],
            method: SamplingMethod::Path {
                scheme: stepper.scheme(),
                step: h,
                steps,
            },
            inner: Inner::Path { stepper, steps },
        })
    }

    pub fn method(&self) -> &SamplingMethod {
        &self.method
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// `e^{-At}`.
    pub fn propagator(&self) -> &Matrix {
        &self.propagator
    }

    /// One draw of `X_t(x)`.
    pub fn sample(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        if self.t == 0.0 {
            return Ok(x.to_vec());
        }
        match &self.inner {
            Inner::Path { stepper, steps } => {
                let mut cur = x.to_vec();
                let mut next = vec![0.0; x.len()];
                let mut scratch = Vec::new();
                for k in 1..=*steps {
                    stepper.advance(&cur, rng, &mut next, &mut scratch)?;
                    check_blow_up(&next, k)?;
                    std::mem::swap(&mut cur, &mut next);
                }
                Ok(cur)
            }
            Inner::Gaussian { root } => {
                let mut out = self.propagator.matvec_unchecked(x);
                for (o, s) in out.iter_mut().zip(&self.shift) {
                    *o += s;
                }
                if let Some(root) = root {
                    let mut z = vec![0.0; root.cols()];
                    rng.standard_normals(&mut z);
                    add_matvec(root, &z, &mut out);
                }
                Ok(out)
            }
            Inner::Modal(modal) => {
                let mut out = self.propagator.matvec_unchecked(x);
                for (o, s) in out.iter_mut().zip(&self.shift) {
                    *o += s;
                }
                modal.add_sample(rng, &mut out)?;
                Ok(out)
            }
        }
    }

    /// `n` draws; draw `i` uses `rng.fork(i)`.
    pub fn sample_many(&self, x: &[f64], n: usize, rng: &RngStream) -> Result<Vec<Vec<f64>>> {
        self.sys.check_state(x)?;
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.sample(x, &mut rng.fork(i)))
            .collect()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `n` independent draws of `X_t(x)`.
pub fn sample_marginal(
    sys: &OUSystem,
    x: &[f64],
    t: f64,
    n: usize,
    rng: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    MarginalSampler::new(sys, t)?.sample_many(x, n, rng)
}

/// `n` independent draws from the invariant law: exact for Gaussian drivers,
/// otherwise `X_{T*}(0)` with the burn-in horizon `T*`.
pub fn sample_stationary(sys: &OUSystem, n: usize, rng: &RngStream) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if let Some(g) = sys.noise().gaussian_structure() {
        let mean = stationary_mean(sys);
        let root = if g.brownian {
            Some(psd_sqrt(&sigma_inf(sys)?)?)
        } else {
            None
        };
        return Ok((0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut out = mean.clone();
                if let Some(root) = &root {
                    let mut z = vec![0.0; root.cols()];
                    rng.fork(i).standard_normals(&mut z);
                    add_matvec(root, &z, &mut out);
                }
                out
            })
            .collect());
    }
    let zero = vec![0.0; sys.dim()];
    sample_marginal(sys, &zero, burn_in_horizon(sys), n, rng)
}

/// `t,x1,...,xm` rows; each path starts a new block at its first time.
pub fn paths_to_csv(paths: &[SamplePath]) -> String {
    let m = paths.first().map_or(0, |p| p.states[0].len());
    let mut out = String::from("t");
    for i in 1..=m {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    let mut row = Vec::with_capacity(m + 1);
    for p in paths {
        for (t, s) in p.times.iter().zip(&p.states) {
            row.clear();
            row.push(*t);
            row.extend_from_slice(s);
            out.push_str(&csv_row(&row));
            out.push('\n');
        }
    }
    out
}

/// `x1,...,xm` rows.
pub fn samples_to_csv(samples: &[Vec<f64>], m: usize) -> String {
    let header: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for s in samples {
        out.push_str(&csv_row(s));
        out.push('\n');
    }
    out
}

/// Driver split into pieces the exact jump representation can handle.
struct Decomposition {
    brownian: usize,
    drift: Vec<f64>,
    jumps: Vec<(f64, JumpLaw)>,
}

fn decompose(noise: &NoiseSpec) -> Option<Decomposition> {
    fn visit(spec: &NoiseSpec, d: &mut Decomposition) -> bool {
        match spec {
            NoiseSpec::Brownian { .. } => {
                d.brownian += 1;
                true
            }
            NoiseSpec::Drift { gamma } => {
                d.drift.iter_mut().zip(gamma).for_each(|(a, g)| *a += g);
                true
            }
            NoiseSpec::CompoundPoisson { rate, jump, .. } => {
                if *rate > 0.0 {
                    d.jumps.push((*rate, jump.clone()));
                }
                true
            }
            NoiseSpec::Sum { parts } => parts.iter().all(|p| visit(p, d)),
            NoiseSpec::AlphaStable { .. } => false,
        }
    }
    let mut d = Decomposition {
        brownian: 0,
        drift: vec![0.0; noise.dim()],
        jumps: Vec::new(),
    };
    visit(noise, &mut d).then_some(d)
}

#[derive(Debug)]
enum ModalJumpLaw {
    /// Modal images of the columns of `σ`, scaled by the jump std.
    Gaussian { columns: Vec<Vec<Complex64>> },
    Atoms { images: Vec<Vec<Complex64>>, weights: Vec<f64> },
}

/// `X_t(0)` for compound-Poisson parts as `Σ_k e^{-A u_k} σ J_k` with
/// `u_k ~ U(0, t)`, evaluated in modal coordinates.
#[derive(Debug)]
struct ModalJumps {
    t: f64,
    /// Representative indices (one per conjugate pair) with weight 1 or 2.
    active: Vec<(usize, f64)>,
    values: Vec<Complex64>,
    vectors: Vec<Vec<Complex64>>,
    parts: Vec<(f64, ModalJumpLaw)>,
    gaussian_root: Option<Matrix>,
}

impl ModalJumps {
    fn new(sys: &OUSystem, t: f64, d: &Decomposition) -> Result<Option<Self>> {
        let Some(basis) = sys.modal() else {
            return Ok(None);
        };
        let n = sys.noise_dim();
        let sigma_col = |k: usize| -> Vec<f64> { (0..sys.dim()).map(|i| sys.sigma()[(i, k)]).collect() };
        let mut parts = Vec::new();
        for (rate, law) in &d.jumps {
            let modal = match law {
                JumpLaw::IsotropicGaussian { std } => ModalJumpLaw::Gaussian {
                    columns: (0..n)
                        .map(|k| {
                            let col: Vec<f64> = sigma_col(k).iter().map(|v| v * std).collect();
                            basis.coefficients(&col)
                        })
                        .collect(),
                },
                JumpLaw::FixedAtoms { points, weights } => ModalJumpLaw::Atoms {
                    images: points
                        .iter()
                        .map(|p| basis.coefficients(&sys.sigma().matvec_unchecked(p)))
                        .collect(),
                    weights: weights.clone(),
                },
            };
            parts.push((*rate, modal));
        }
        let gaussian_root = if d.brownian > 0 && t > 0.0 {
            let cov = covariance_and_propagator(sys.a(), sys.diffusion(), t)?.0;
            Some(psd_sqrt(&cov.scale(d.brownian as f64))?)
        } else {
            None
        };
        let active = basis
            .real_weights()
            .into_iter()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
            .collect();
        Ok(Some(Self {
            t,
            active,
            values: basis.eigenvalues().to_vec(),
            vectors: basis.eigenvectors().to_vec(),
            parts,
            gaussian_root,
        }))
    }

    fn add_sample(&self, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        let m = out.len();
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        let mut z = Vec::new();
        for (rate, law) in &self.parts {
            let count = poisson(rate * self.t, rng)?;
            for _ in 0..count {
                let u = self.t * rng.uniform_open();
                match law {
                    ModalJumpLaw::Atoms { images, weights } => {
                        let c = &images[categorical(weights, rng)];
                        for &(j, _) in &self.active {
                            acc[j] += (-self.values[j] * u).exp() * c[j];
                        }
                    }
                    ModalJumpLaw::Gaussian { columns } => {
                        z.resize(columns.len(), 0.0);
                        rng.standard_normals(&mut z);
                        for &(j, _) in &self.active {
                            let c: Complex64 = columns.iter().zip(&z).map(|(col, zk)| col[j] * zk).sum();
                            acc[j] += (-self.values[j] * u).exp() * c;
                        }
                    }
                }
            }
        }
        for &(j, w) in &self.active {
            if acc[j] != Complex64::new(0.0, 0.0) {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += w * (acc[j] * self.vectors[j][i]).re;
                }
            }
        }
        if let Some(root) = &self.gaussian_root {
            z.resize(root.cols(), 0.0);
            rng.standard_normals(&mut z);
            add_matvec(root, &z, out);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_exp;
    use crate::ou::{build_system, gaussian_marginal, sigma_t};

    fn mean_cov(xs: &[Vec<f64>]) -> (Vec<f64>, Matrix) {
        let n = xs.len() as f64;
        let m = xs[0].len();
        let mut mean = vec![0.0; m];
        for x in xs {
            for i in 0..m {
                mean[i] += x[i] / n;
            }
        }
        let mut cov = Matrix::zeros(m, m);
        for x in xs {
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        (mean, cov)
    }

    fn two_dim(noise: NoiseSpec) -> OUSystem {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]).unwrap();
        build_system(a, Matrix::identity(2), noise).unwrap()
    }

    #[test]
    fn noiseless_path_is_exact() {
        let sys = build_system(
            Matrix::from_rows(&[vec![0.2, -1.0], vec![1.0, 0.3]]).unwrap(),
            Matrix::zeros(2, 1),
            NoiseSpec::Brownian { dim: 1 },
        )
        .unwrap();
        let x = [1.0, 2.0];
        let path = simulate_path(&sys, &x, 4.0, 40, &mut RngStream::new(1, 0)).unwrap();
        for (t, s) in path.times.iter().zip(&path.states) {
            let want = mat_exp(&sys.a().scale(-1.0), *t).unwrap().matvec(&x).unwrap();
            for (a, b) in s.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "t = {t}");
            }
        }
        assert_eq!(path.times.len(), 41);
        assert_eq!(*path.times.last().unwrap(), 4.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let sys = two_dim(NoiseSpec::Brownian { dim: 2 });
        let mut rng = RngStream::new(0, 0);
        assert!(simulate_path(&sys, &[0.0, 0.0], 1.0, 0, &mut rng).is_err());
        assert!(simulate_path(&sys, &[0.0], 1.0, 5, &mut rng).is_err());
        assert!(simulate_path(&sys, &[0.0, 0.0], -1.0, 5, &mut rng).is_err());
        assert!(sample_stationary(&sys, 0, &rng).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        // Euler–Maruyama with hA = 30 multiplies the state by -29 each step
        let sys = build_system(Matrix::from_diag(&[3.0]), Matrix::identity(1), NoiseSpec::Brownian { dim: 1 })
            .unwrap();
        let err = simulate_path_with(&sys, &[1.0], 100.0, 10, Scheme::EulerMaruyama, &mut RngStream::new(0, 0))
            .unwrap_err();
        assert!(matches!(err, Error::BlowUp { step, .. } if step == 9));
    }

    #[test]
    fn exact_branch_marginal() {
        let sys = two_dim(NoiseSpec::Brownian { dim: 2 });
        let x = [1.0, -1.0];
        let rng = RngStream::new(3, 0);
        let paths = simulate_paths(&sys, &x, 1.5, 3, 100_000, Scheme::Auto, &rng).unwrap();
        let ends: Vec<Vec<f64>> = paths.iter().map(|p| p.states[3].clone()).collect();
        let (mean, cov) = mean_cov(&ends);
        let law = gaussian_marginal(&sys, &x, 1.5).unwrap();
        let n = ends.len() as f64;
        for i in 0..2 {
            let se = (law.cov[(i, i)] / n).sqrt();
            assert!((mean[i] - law.mean[i]).abs() < 5.0 * se);
            for j in 0..2 {
                let var = law.cov[(i, i)] * law.cov[(j, j)] + law.cov[(i, j)].powi(2);
                let se = (var / n).sqrt();
                assert!((cov[(i, j)] - law.cov[(i, j)]).abs() < 5.0 * se, "cov ({i},{j})");
            }
        }
    }

    #[test]
    fn euler_maruyama_is_first_order() {
        // moments of the EM chain propagate exactly through the stepper matrices
        let sys = two_dim(NoiseSpec::Brownian { dim: 2 });
        let x = [1.0, -1.0];
        let t = 1.0;
        let exact = gaussian_marginal(&sys, &x, t).unwrap();
        let err = |n: usize| -> f64 {
            let st = Stepper::new(&sys, t / n as f64, Scheme::EulerMaruyama).unwrap();
            let tr = st.transition();
            let inj = st.injection().unwrap();
            let noise_cov = inj.mul_unchecked(&inj.transpose()).scale(st.step_size());
            let mut mean = x.to_vec();
            let mut cov = Matrix::zeros(2, 2);
            for _ in 0..n {
                mean = tr.matvec_unchecked(&mean);
                cov = &tr.mul_unchecked(&cov).mul_unchecked(&tr.transpose()) + &noise_cov;
            }
            let dm: Vec<f64> = mean.iter().zip(&exact.mean).map(|(a, b)| a - b).collect();
            norm2(&dm) + (&cov - &exact.cov).frobenius_norm()
        };
        let (e1, e2, e3) = (err(20), err(40), err(80));
        assert!((e1 / e2).log2() >= 0.9 && (e2 / e3).log2() >= 0.9);

        // and the sampled chain reproduces those moments
        let rng = RngStream::new(8, 0);
        let sampler = MarginalSampler::with_path_scheme(&sys, t, Scheme::EulerMaruyama, 20).unwrap();
        let draws = sampler.sample_many(&x, 100_000, &rng).unwrap();
        let (mean, _) = mean_cov(&draws);
        let st = Stepper::new(&sys, t / 20.0, Scheme::EulerMaruyama).unwrap();
        let mut want = x.to_vec();
        for _ in 0..20 {
            want = st.transition().matvec_unchecked(&want);
        }
        for i in 0..2 {
            let se = (exact.cov[(i, i)] / 1e5).sqrt();
            assert!((mean[i] - want[i]).abs() < 5.0 * se);
        }
    }

    #[test]
    fn stationary_brownian_covariance() {
        let sys = build_system(Matrix::from_diag(&[1.0, 2.0]), Matrix::identity(2), NoiseSpec::Brownian { dim: 2 })
            .unwrap();
        let draws = sample_stationary(&sys, 100_000, &RngStream::new(5, 0)).unwrap();
        let (_, cov) = mean_cov(&draws);
        let n = 1e5f64;
        for (i, v) in [0.5, 0.25].iter().enumerate() {
            let se = v * (2.0 / n).sqrt();
            assert!((cov[(i, i)] - v).abs() < 5.0 * se);
        }
        assert!(cov[(0, 1)].abs() < 5.0 * (0.5f64 * 0.25 / n).sqrt());
    }

    #[test]
    fn stationary_drift_only() {
        let sys = build_system(
            Matrix::from_diag(&[2.0, 4.0]),
            Matrix::identity(2),
            NoiseSpec::Drift { gamma: vec![1.0, 2.0] },
        )
        .unwrap();
        let draws = sample_stationary(&sys, 10, &RngStream::new(0, 0)).unwrap();
        assert!(draws.iter().all(|d| d == &vec![0.5, 0.5]));
    }

    #[test]
    fn stable_stationary_median() {
        let sys = build_system(
            Matrix::from_diag(&[1.0, 2.0]),
            Matrix::identity(2),
            NoiseSpec::AlphaStable { dim: 2, alpha: 1.5, scale: 1.0 },
        )
        .unwrap();
        let draws = sample_stationary(&sys, 100_000, &RngStream::new(21, 0)).unwrap();
        for i in 0..2 {
            let mut c: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            c.sort_by(f64::total_cmp);
            let med = 0.5 * (c[49_999] + c[50_000]);
            assert!(med.abs() < 0.02, "median {med}");
        }
    }

    #[test]
    fn modal_jumps_match_exact_moments() {
        // compound Poisson with N(0, s²) jumps: covariance rate s² Σ_t, mean from the drift only
        let noise = NoiseSpec::Sum {
            parts: vec![
                NoiseSpec::CompoundPoisson {
                    dim: 2,
                    rate: 3.0,
                    jump: JumpLaw::IsotropicGaussian { std: 0.8 },
                },
                NoiseSpec::Drift { gamma: vec![0.5, -1.0] },
            ],
        };
        let a = Matrix::from_rows(&[vec![0.3, -1.0], vec![1.0, 0.4]]).unwrap();
        let sys = build_system(a, Matrix::identity(2), noise).unwrap();
        let t = 1.7;
        let sampler = MarginalSampler::new(&sys, t).unwrap();
        assert_eq!(sampler.method(), &SamplingMethod::ModalJumps);
        let x = [1.0, 0.5];
        let draws = sampler.sample_many(&x, 100_000, &RngStream::new(4, 0)).unwrap();
        let (mean, cov) = mean_cov(&draws);
        let want_cov = sigma_t(&sys, t).unwrap().scale(3.0 * 0.64);
        let ex = mat_exp(&sys.a().scale(-1.0), t).unwrap().matvec(&x).unwrap();
        let tm = transient_mean(&sys, t).unwrap();
        let n = 1e5f64;
        for i in 0..2 {
            let se = (want_cov[(i, i)] / n).sqrt();
            assert!((mean[i] - ex[i] - tm[i]).abs() < 5.0 * se);
            // jumps are Gaussian mixtures; allow for excess kurtosis
            assert!((cov[(i, i)] - want_cov[(i, i)]).abs() < 0.03 * want_cov[(i, i)]);
        }
    }

    #[test]
    fn modal_atoms_mean() {
        let noise = NoiseSpec::CompoundPoisson {
            dim: 2,
            rate: 2.0,
            jump: JumpLaw::FixedAtoms {
                points: vec![vec![1.0, 0.0], vec![0.0, -2.0]],
                weights: vec![0.7, 0.3],
            },
        };
        let sys = two_dim(noise);
        let t = 1.0;
        let draws = sample_marginal(&sys, &[0.0, 0.0], t, 100_000, &RngStream::new(9, 0)).unwrap();
        let (mean, cov) = mean_cov(&draws);
        let want = transient_mean(&sys, t).unwrap();
        for i in 0..2 {
            assert!((mean[i] - want[i]).abs() < 5.0 * (cov[(i, i)] / 1e5).sqrt());
        }
    }

    #[test]
    fn exponential_euler_mean_is_exact() {
        let noise = NoiseSpec::Sum {
            parts: vec![
                NoiseSpec::AlphaStable { dim: 2, alpha: 1.7, scale: 0.3 },
                NoiseSpec::Drift { gamma: vec![1.0, 1.0] },
            ],
        };
        let sys = two_dim(noise);
        let st = Stepper::new(&sys, 0.5, Scheme::Auto).unwrap();
        assert_eq!(st.scheme(), Scheme::ExponentialEuler);
        // drift-only mean through the linear maps after 6 steps
        let inj = st.injection().unwrap();
        let drift = inj.matvec_unchecked(&[0.5, 0.5]);
        let mut m = vec![0.0, 0.0];
        for _ in 0..6 {
            m = st.transition().matvec_unchecked(&m);
            m[0] += drift[0];
            m[1] += drift[1];
        }
        let want = transient_mean(&sys, 3.0).unwrap();
        for i in 0..2 {
            assert!((m[i] - want[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn determinism_and_csv() {
        let noise = NoiseSpec::CompoundPoisson {
            dim: 2,
            rate: 1.0,
            jump: JumpLaw::IsotropicGaussian { std: 1.0 },
        };
        let sys = two_dim(noise);
        let rng = RngStream::new(77, 2);
        let a = simulate_paths(&sys, &[1.0, 1.0], 1.0, 10, 3, Scheme::Auto, &rng).unwrap();
        let b = simulate_paths(&sys, &[1.0, 1.0], 1.0, 10, 3, Scheme::Auto, &rng).unwrap();
        assert_eq!(a, b);
        let csv = paths_to_csv(&a);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,x2");
        assert_eq!(lines.len(), 1 + 3 * 11);
        assert!(lines[12].starts_with("0,"));
        let s = samples_to_csv(&[vec![1.0, 0.5]], 2);
        assert_eq!(s, "x1,x2\n1,0.5\n");
    }
}
