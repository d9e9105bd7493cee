//! Cutoff machinery: the generic decay rate `ρₓ` of a state, cutoff times,
//! dichotomy sweeps over `(ε, δ)`, window profiles and moment gaps.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::g17;
use crate::linalg::{norm2, Matrix};
use crate::noise::NoiseSpec;
use crate::ou::{
    gaussian_marginal, propagator, sample_stationary, stationary_law, stationary_mean,
    GaussianLaw, MarginalSampler, OUSystem,
};
use crate::rng::RngStream;
use crate::wasserstein::{bounds_from_samples, check_order, contracted_spread, ergodicity_bounds, w2_gaussian};

/// Relative size below which a modal coefficient counts as zero.
pub const COEFFICIENT_TOL: f64 = 1e-10;
/// Envelope horizon: the subdominant modes have decayed by this factor.
pub const SUBDOMINANT_RATIO: f64 = 1e-8;
/// Final ratio below which a sweep row is called vanishing.
pub const VANISHING_THRESHOLD: f64 = 0.1;
/// Final ratio above which a sweep row is called diverging.
pub const DIVERGING_THRESHOLD: f64 = 10.0;
/// Grid points needed before any verdict other than inconclusive.
pub const MIN_VERDICT_POINTS: usize = 4;
/// Slack, in standard errors, allowed in monotonicity checks on estimates.
pub const SE_TOLERANCE: f64 = 5.0;

const MAX_HORIZON_RATES: f64 = 1e4;
const LOG_GRID_POINTS: usize = 400;
const MAX_UNIFORM_POINTS: usize = 100_000;

/// Modal decomposition of `e^{-At}x` and its exponential envelope.
#[derive(Debug, Clone)]
pub struct RateAnalysis {
    /// `c_j(x)` with `x = Σ c_j v_j`, in the order of the eigenvalues.
    pub coefficients: Vec<Complex64>,
    pub eigenvalues: Vec<Complex64>,
    /// Indices with `|c_j| > 1e-10·|x|`.
    pub active: Vec<usize>,
    pub rho_x: f64,
    /// Active indices whose real part equals `rho_x`.
    pub resonant: Vec<usize>,
    pub c1: f64,
    pub c2: f64,
    pub horizon: f64,
    /// Times at which the envelope was evaluated.
    pub grid: Vec<f64>,
    modes: Vec<(Complex64, Vec<Complex64>)>,
}

impl RateAnalysis {
    /// `|e^{-At}x|·e^{ρₓt}` from the modal expansion, without underflow.
    pub fn scaled_norm(&self, t: f64) -> f64 {
        let m = self.modes.first().map_or(0, |(_, v)| v.len());
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for (&j, (_, v)) in self.active.iter().zip(&self.modes) {
            let w = self.coefficients[j] * (-(self.eigenvalues[j] - self.rho_x) * t).exp();
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += w * vi;
            }
        }
        acc.iter().map(|z| z.re * z.re).sum::<f64>().sqrt()
    }
}

/// Decay rate of `e^{-At}x` and envelope constants `C₁ ≤ |e^{-At}x|e^{ρₓt} ≤ C₂`.
pub fn rate_analysis(sys: &OUSystem, x: &[f64]) -> Result<RateAnalysis> {
    sys.check_state(x)?;
    if !sys.is_generic() {
        return Err(Error::NotGeneric("eigenvalues of A are not pairwise distinct".into()));
    }
    let xn = norm2(x);
    if xn == 0.0 {
        return Err(Error::Domain("rate of the zero state is undefined".into()));
    }
    let basis = sys.modal().ok_or_else(|| {
        Error::Numerical("eigenvector basis too ill-conditioned for a modal expansion".into())
    })?;
    let coefficients = basis.coefficients(x);
    let eigenvalues = basis.eigenvalues().to_vec();
    let active: Vec<usize> =
        (0..coefficients.len()).filter(|&j| coefficients[j].norm() > COEFFICIENT_TOL * xn).collect();
    if active.is_empty() {
        return Err(Error::Numerical(format!(
            "inconsistent modal expansion: every coefficient of x is below {COEFFICIENT_TOL:e}·|x|"
        )));
    }
    let rho_x = active.iter().map(|&j| eigenvalues[j].re).fold(f64::INFINITY, f64::min);
    let scale = 1.0 + eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let res_tol = 1e-8 * scale;
    let resonant: Vec<usize> =
        active.iter().copied().filter(|&j| eigenvalues[j].re - rho_x <= res_tol).collect();
    let gap = active
        .iter()
        .map(|&j| eigenvalues[j].re - rho_x)
        .filter(|&g| g > res_tol)
        .fold(f64::INFINITY, f64::min);
    let omega_max = active.iter().map(|&j| eigenvalues[j].im.abs()).fold(0.0, f64::max);
    let omega_min = resonant
        .iter()
        .map(|&j| eigenvalues[j].im.abs())
        .filter(|&w| w > res_tol)
        .fold(f64::INFINITY, f64::min);
    let mut horizon = if gap.is_finite() { -SUBDOMINANT_RATIO.ln() / gap } else { 20.0 / rho_x };
    if omega_min.is_finite() {
        horizon = horizon.max(20.0 * std::f64::consts::TAU / omega_min);
    }
    horizon = horizon.min(MAX_HORIZON_RATES / rho_x);

    let mut grid = vec![0.0];
    let t0 = horizon * 1e-6;
    let ratio = (horizon / t0).powf(1.0 / (LOG_GRID_POINTS - 1) as f64);
    grid.extend((0..LOG_GRID_POINTS).map(|k| t0 * ratio.powi(k as i32)));
    let mut dt = horizon / 1000.0;
    if omega_max > 0.0 {
        dt = dt.min(0.05 * std::f64::consts::TAU / omega_max);
    }
    let uniform = ((horizon / dt).ceil() as usize).min(MAX_UNIFORM_POINTS);
    grid.extend((1..=uniform).map(|k| horizon * k as f64 / uniform as f64));
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let modes = active
        .iter()
        .map(|&j| (eigenvalues[j], basis.eigenvectors()[j].clone()))
        .collect();
    let mut out = RateAnalysis {
        coefficients,
        eigenvalues,
        active,
        rho_x,
        resonant,
        c1: 0.0,
        c2: 0.0,
        horizon,
        grid: Vec::new(),
        modes,
    };
    let values: Vec<f64> = grid.iter().map(|&t| out.scaled_norm(t)).collect();
    out.c1 = values.iter().copied().fold(f64::INFINITY, f64::min);
    out.c2 = values.iter().copied().fold(0.0, f64::max);
    out.grid = grid;
    Ok(out)
}

/// `t_ε = |ln ε| / ρ`.
pub fn cutoff_time(rho: f64, eps: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive and finite, got {rho}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(-eps.ln() / rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverging,
    Vanishing,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Diverging => "diverging",
            Verdict::Vanishing => "vanishing",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Where a reported distance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Closed-form Gaussian `W₂`.
    Exact,
    UpperShift,
    UpperDisintegration,
    LowerMean,
    LowerShift,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Exact => "exact",
            Route::UpperShift => "upper_shift",
            Route::UpperDisintegration => "upper_disintegration",
            Route::LowerMean => "lower_mean",
            Route::LowerShift => "lower_shift",
        }
    }
}

/// Two-sided estimate of `W_p(X_t(x), μ)` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lower: f64,
    pub lower_se: f64,
    pub lower_route: Route,
    pub upper: f64,
    pub upper_se: f64,
    pub upper_route: Route,
}

/// Shared evaluator for sweeps and window profiles.
enum Evaluator {
    Exact { target: GaussianLaw },
    ClosedForm,
    Sampled { stationary: Vec<Vec<f64>> },
}

struct Setup<'a> {
    sys: &'a OUSystem,
    x: &'a [f64],
    p: f64,
    evaluator: Evaluator,
    lower_mean_route: bool,
    seed: u64,
}

impl Setup<'_> {
    fn bracket(&self, t: f64, rng: &RngStream) -> Result<Bracket> {
        match &self.evaluator {
            Evaluator::Exact { target } => {
                let w = w2_gaussian(&gaussian_marginal(self.sys, self.x, t)?, target)?;
                Ok(Bracket {
                    lower: w,
                    lower_se: 0.0,
                    lower_route: Route::Exact,
                    upper: w,
                    upper_se: 0.0,
                    upper_route: Route::Exact,
                })
            }
            Evaluator::ClosedForm => {
                let b = ergodicity_bounds(self.sys, self.x, t, self.p, 0, rng)?;
                Ok(self.assemble(&b))
            }
            Evaluator::Sampled { stationary } => {
                let b = bounds_from_samples(self.sys, self.x, t, self.p, stationary, rng, false)?;
                Ok(self.assemble(&b))
            }
        }
    }

    fn assemble(&self, b: &crate::wasserstein::BoundBundle) -> Bracket {
        let (lower, lower_se, lower_route) = if self.lower_mean_route {
            (b.lower_mean, 0.0, Route::LowerMean)
        } else {
            (b.lower_shift, b.wp_estimate_se, Route::LowerShift)
        };
        let (upper, upper_se, upper_route) = if b.upper_shift <= b.upper_disintegration {
            (b.upper_shift, b.wp_estimate_se, Route::UpperShift)
        } else {
            (b.upper_disintegration, b.upper_disintegration_se, Route::UpperDisintegration)
        };
        Bracket { lower, lower_se, lower_route, upper, upper_se, upper_route }
    }
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&a| a == 0.0)
}

/// Resolves the rate, the mean condition and the distance evaluator.
fn prepare<'a>(
    sys: &'a OUSystem,
    x: &'a [f64],
    p: f64,
    mc: usize,
    rng: &RngStream,
) -> Result<(Setup<'a>, RateInfo)> {
    check_order(p)?;
    sys.check_state(x)?;
    let m_inf = stationary_mean(sys);
    let gap: Vec<f64> = x.iter().zip(&m_inf).map(|(a, b)| a - b).collect();
    let mean_condition = norm2(&gap) > 1e-12 * (1.0 + norm2(&m_inf));
    let gaussian = sys.noise().gaussian_structure();
    let exact = gaussian.is_some() && p == 2.0;

    let rate = if !mean_condition {
        if !(exact && is_zero(x)) {
            return Err(Error::DegenerateInitialState);
        }
        // centered Gaussian started at the origin: only the noise term decays
        RateInfo { rho_x: 2.0 * sys.rho_min(), lower_route_rate: None, origin: true, mean_condition }
    } else if is_zero(x) {
        if !exact {
            return Err(Error::Domain(
                "x = 0 is only supported on the exact Gaussian branch".into(),
            ));
        }
        let neg: Vec<f64> = m_inf.iter().map(|v| -v).collect();
        let rho = rate_analysis(sys, &neg)?.rho_x.min(2.0 * sys.rho_min());
        RateInfo { rho_x: rho, lower_route_rate: None, origin: true, mean_condition }
    } else {
        let rho_x = rate_analysis(sys, x)?.rho_x;
        let lower_route_rate =
            if is_zero(&m_inf) { None } else { Some(rate_analysis(sys, &gap)?.rho_x) };
        RateInfo { rho_x, lower_route_rate, origin: false, mean_condition }
    };

    let evaluator = if exact {
        Evaluator::Exact { target: stationary_law(sys)? }
    } else if gaussian.is_some() && p <= 2.0 {
        Evaluator::ClosedForm
    } else {
        if mc == 0 {
            return Err(Error::Domain("Monte-Carlo budget must be >= 1".into()));
        }
        Evaluator::Sampled { stationary: sample_stationary(sys, mc, &rng.fork(0))? }
    };
    Ok((
        Setup { sys, x, p, evaluator, lower_mean_route: !is_zero(&m_inf), seed: rng.seed() },
        rate,
    ))
}

struct RateInfo {
    rho_x: f64,
    lower_route_rate: Option<f64>,
    origin: bool,
    mean_condition: bool,
}

fn check_eps_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::Domain("empty eps grid".into()));
    }
    if let Some(&e) = eps_grid.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {e}")));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("eps grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// True when `values` is non-increasing (`decreasing`) or non-decreasing,
/// up to `SE_TOLERANCE` combined standard errors between neighbours.
fn monotone(values: &[f64], se: &[f64], decreasing: bool) -> bool {
    values.windows(2).zip(se.windows(2)).all(|(v, s)| {
        let slack = SE_TOLERANCE * (s[0] * s[0] + s[1] * s[1]).sqrt();
        if decreasing {
            v[1] <= v[0] + slack
        } else {
            v[1] >= v[0] - slack
        }
    })
}

fn loglog_slope(eps: &[f64], ratios: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(ratios)
        .filter(|(_, &r)| r > 0.0 && r.is_finite())
        .map(|(&e, &r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One `(ε, δ)` entry of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub eps: f64,
    pub delta: f64,
    pub t: f64,
    #[serde(flatten)]
    pub bracket: Bracket,
}

impl SweepCell {
    pub fn lower_ratio(&self) -> f64 {
        self.bracket.lower / self.eps
    }

    pub fn upper_ratio(&self) -> f64 {
        self.bracket.upper / self.eps
    }
}

/// Verdict for one `δ` across the `ε` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaVerdict {
    pub delta: f64,
    pub verdict: Verdict,
    /// Route of the ratios listed in `ratios`.
    pub route: Route,
    pub ratios: Vec<f64>,
    /// Least-squares slope of `ln ratio` against `ln ε`.
    pub loglog_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffReport {
    pub x: Vec<f64>,
    pub p: f64,
    pub rho_x: f64,
    /// Rate of `e^{-At}(x - A⁻¹σE[L₁])`, driving the lower mean route.
    pub lower_route_rate: Option<f64>,
    pub rates_differ: bool,
    /// True when `x` differs from the stationary mean.
    pub mean_condition: bool,
    /// Set for the origin-start branch, where `ρ` is twice the spectral gap.
    pub origin_branch: bool,
    pub exact: bool,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub t_eps: Vec<f64>,
    /// Cells in `δ`-major order.
    pub cells: Vec<SweepCell>,
    pub verdicts: Vec<DeltaVerdict>,
    pub mc: usize,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "eps,delta,t,ratio,route,verdict";

impl CutoffReport {
    pub fn cell(&self, eps_index: usize, delta_index: usize) -> &SweepCell {
        &self.cells[delta_index * self.eps_grid.len() + eps_index]
    }

    pub fn verdict(&self, delta: f64) -> Option<Verdict> {
        self.verdicts.iter().find(|v| v.delta == delta).map(|v| v.verdict)
    }

    /// `eps,delta,t,ratio,route,verdict`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for (d, v) in self.verdicts.iter().enumerate() {
            for (e, ratio) in v.ratios.iter().enumerate() {
                let c = self.cell(e, d);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    g17(c.eps),
                    g17(c.delta),
                    g17(c.t),
                    g17(*ratio),
                    v.route.as_str(),
                    v.verdict.as_str()
                );
            }
        }
        out
    }
}

fn judge(delta: f64, cells: &[SweepCell]) -> DeltaVerdict {
    let eps: Vec<f64> = cells.iter().map(|c| c.eps).collect();
    let up: Vec<f64> = cells.iter().map(SweepCell::upper_ratio).collect();
    let up_se: Vec<f64> = cells.iter().map(|c| c.bracket.upper_se / c.eps).collect();
    let lo: Vec<f64> = cells.iter().map(SweepCell::lower_ratio).collect();
    let lo_se: Vec<f64> = cells.iter().map(|c| c.bracket.lower_se / c.eps).collect();
    let enough = cells.len() >= MIN_VERDICT_POINTS;
    let verdict = if enough
        && monotone(&up, &up_se, true)
        && up.last().is_some_and(|&r| r < VANISHING_THRESHOLD)
    {
        Verdict::Vanishing
    } else if enough
        && monotone(&lo, &lo_se, false)
        && lo.last().is_some_and(|&r| r > DIVERGING_THRESHOLD)
    {
        Verdict::Diverging
    } else {
        Verdict::Inconclusive
    };
    let (ratios, route) = if delta < 1.0 {
        (lo, cells[0].bracket.lower_route)
    } else {
        (up, cells[0].bracket.upper_route)
    };
    let loglog_slope = loglog_slope(&eps, &ratios);
    DeltaVerdict { delta, verdict, route, ratios, loglog_slope }
}

/// Evaluates `W_p(X_t(x), μ)/ε` at `t = δ·t_ε` over the grids and classifies
/// each `δ` row. Gaussian drivers with `p = 2` are exact; otherwise one
/// stationary sample of size `mc` (from `rng.fork(0)`) serves every cell.
pub fn dichotomy_sweep(
    sys: &OUSystem,
    x: &[f64],
    p: f64,
    eps_grid: &[f64],
    delta_grid: &[f64],
    mc: usize,
    rng: &RngStream,
) -> Result<CutoffReport> {
    check_eps_grid(eps_grid)?;
    if delta_grid.is_empty() {
        return Err(Error::Domain("empty delta grid".into()));
    }
    if let Some(&d) = delta_grid.iter().find(|&&d| !(d > 0.0 && d.is_finite()) || d == 1.0) {
        return Err(Error::Domain(format!("delta must be positive, finite and != 1, got {d}")));
    }
    let (setup, rate) = prepare(sys, x, p, mc, rng)?;
    let t_eps = eps_grid
        .iter()
        .map(|&e| cutoff_time(rate.rho_x, e))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(f64, f64, f64)> = delta_grid
        .iter()
        .flat_map(|&d| eps_grid.iter().zip(&t_eps).map(move |(&e, &te)| (e, d, d * te)))
        .collect();
    let cells = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(eps, delta, t))| {
            let bracket = setup.bracket(t, &rng.fork(1 + i as u64))?;
            Ok(SweepCell { eps, delta, t, bracket })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdicts = delta_grid
        .iter()
        .zip(cells.chunks(eps_grid.len()))
        .map(|(&d, row)| judge(d, row))
        .collect();
    let rates_differ = rate
        .lower_route_rate
        .is_some_and(|r| (r - rate.rho_x).abs() > 1e-8 * (1.0 + rate.rho_x));
    Ok(CutoffReport {
        x: x.to_vec(),
        p,
        rho_x: rate.rho_x,
        lower_route_rate: rate.lower_route_rate,
        rates_differ,
        mean_condition: rate.mean_condition,
        origin_branch: rate.origin,
        exact: matches!(setup.evaluator, Evaluator::Exact { .. }),
        eps_grid: eps_grid.to_vec(),
        delta_grid: delta_grid.to_vec(),
        t_eps,
        cells,
        verdicts,
        mc: if matches!(setup.evaluator, Evaluator::Sampled { .. }) { mc } else { 0 },
        seed: setup.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCell {
    pub eps: f64,
    pub r: f64,
    pub t: f64,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
}

/// Extremes over the `ε` grid at one offset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub r: f64,
    /// Smallest lower ratio; `None` when every `t_ε + r` was negative.
    pub inf_ratio: Option<f64>,
    pub sup_ratio: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowProfile {
    pub rho_x: f64,
    pub p: f64,
    pub exact: bool,
    pub eps_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    /// Cells with `t_ε + r >= 0`, `r`-major.
    pub cells: Vec<WindowCell>,
    pub summary: Vec<WindowSummary>,
}

pub const WINDOW_CSV_HEADER: &str = "eps,r,t,lower_ratio,upper_ratio";

impl WindowProfile {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{WINDOW_CSV_HEADER}\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                g17(c.eps),
                g17(c.r),
                g17(c.t),
                g17(c.lower_ratio),
                g17(c.upper_ratio)
            );
        }
        out
    }
}

/// Ratios `W_p(X_{t_ε + r}(x), μ)/ε` along additive offsets; offsets that
/// would give a negative time are skipped.
pub fn window_profile(
    sys: &OUSystem,
    x: &[f64],
    p: f64,
    eps_grid: &[f64],
    r_grid: &[f64],
    mc: usize,
    rng: &RngStream,
) -> Result<WindowProfile> {
    check_eps_grid(eps_grid)?;
    if r_grid.is_empty() || r_grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("offset grid must be nonempty and finite".into()));
    }
    let (setup, rate) = prepare(sys, x, p, mc, rng)?;
    let mut jobs = Vec::new();
    for &r in r_grid {
        for &eps in eps_grid {
            let t = cutoff_time(rate.rho_x, eps)? + r;
            if t >= 0.0 {
                jobs.push((eps, r, t));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(eps, r, t))| {
            let b = setup.bracket(t, &rng.fork(1 + i as u64))?;
            Ok(WindowCell { eps, r, t, lower_ratio: b.lower / eps, upper_ratio: b.upper / eps })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = r_grid
        .iter()
        .map(|&r| {
            let row: Vec<&WindowCell> = cells.iter().filter(|c| c.r == r).collect();
            let inf = row.iter().map(|c| c.lower_ratio).reduce(f64::min);
            let sup = row.iter().map(|c| c.upper_ratio).reduce(f64::max);
            WindowSummary { r, inf_ratio: inf, sup_ratio: sup, points: row.len() }
        })
        .collect();
    Ok(WindowProfile {
        rho_x: rate.rho_x,
        p,
        exact: matches!(setup.evaluator, Evaluator::Exact { .. }),
        eps_grid: eps_grid.to_vec(),
        r_grid: r_grid.to_vec(),
        cells,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableCell {
    pub eps: f64,
    pub t: f64,
    /// `E|X_t(x)|^q - E|X_∞|^q`.
    pub gap: f64,
    pub gap_se: f64,
    /// `|gap| / ε`.
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableReport {
    pub q: f64,
    pub delta: f64,
    pub rho: f64,
    pub exact: bool,
    pub cells: Vec<ObservableCell>,
    pub verdict: Verdict,
    pub mc: usize,
    pub seed: u64,
}

pub const OBSERVABLE_CSV_HEADER: &str = "eps,t,gap,gap_se,ratio,ratio_se";

impl ObservableReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{OBSERVABLE_CSV_HEADER}\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                g17(c.eps),
                g17(c.t),
                g17(c.gap),
                g17(c.gap_se),
                g17(c.ratio),
                g17(c.ratio_se)
            );
        }
        out
    }
}

fn finite_moment_order(noise: &NoiseSpec) -> f64 {
    match noise {
        NoiseSpec::AlphaStable { alpha, .. } => *alpha,
        NoiseSpec::Sum { parts } => parts.iter().map(finite_moment_order).fold(f64::INFINITY, f64::min),
        _ => f64::INFINITY,
    }
}

/// Gap between the `q`-th absolute moments of `X_t(x)` and of `X_∞` at
/// `t = δ·t_ε`, divided by `ε`. Exact for Gaussian drivers with `q = 2`;
/// otherwise estimated with the coupling `X_t(x) = e^{-At}x + Z`,
/// `X_∞ = Z + e^{-At}Y` with `Z ~ X_t(0)` and `Y ~ μ` independent.
pub fn observable_precutoff(
    sys: &OUSystem,
    x: &[f64],
    q: f64,
    eps_grid: &[f64],
    delta: f64,
    mc: usize,
    rng: &RngStream,
) -> Result<ObservableReport> {
    if !(delta > 1.0) || !delta.is_finite() {
        return Err(Error::OutOfScope(format!(
            "moment gaps are only claimed to vanish for delta > 1, got {delta}"
        )));
    }
    check_order(q)?;
    let alpha = finite_moment_order(sys.noise());
    if q >= alpha {
        return Err(Error::Domain(format!(
            "moment of order {q} is infinite for a stable driver of index {alpha}"
        )));
    }
    check_eps_grid(eps_grid)?;
    sys.check_state(x)?;
    let m_inf = stationary_mean(sys);
    let rho = if !is_zero(x) {
        rate_analysis(sys, x)?.rho_x
    } else if is_zero(&m_inf) {
        2.0 * sys.rho_min()
    } else {
        let neg: Vec<f64> = m_inf.iter().map(|v| -v).collect();
        rate_analysis(sys, &neg)?.rho_x
    };
    let exact = sys.noise().gaussian_structure().is_some() && q == 2.0;
    let d: Vec<f64> = x.iter().zip(&m_inf).map(|(a, b)| a - b).collect();

    let stationary = if exact {
        Vec::new()
    } else {
        if mc < 2 {
            return Err(Error::Domain("Monte-Carlo budget must be >= 2".into()));
        }
        sample_stationary(sys, mc, &rng.fork(0))?
    };
    let cells = eps_grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let t = delta * cutoff_time(rho, eps)?;
            let (gap, gap_se) = if exact {
                // |m + e d|² - |m|² - Tr(e Σ_∞ eᵀ), no cancellation between O(1) terms
                let e: Matrix = propagator(sys, t)?;
                let ed = e.matvec_unchecked(&d);
                let cross: f64 = m_inf.iter().zip(&ed).map(|(a, b)| a * b).sum();
                let mean_part = 2.0 * cross + ed.iter().map(|v| v * v).sum::<f64>();
                (mean_part - contracted_spread(sys, t)?, 0.0)
            } else {
                moment_gap_mc(sys, x, q, t, &stationary, &rng.fork(1 + k as u64))?
            };
            Ok(ObservableCell {
                eps,
                t,
                gap,
                gap_se,
                ratio: gap.abs() / eps,
                ratio_se: gap_se / eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = cells.iter().map(|c| c.ratio).collect();
    let se: Vec<f64> = cells.iter().map(|c| c.ratio_se).collect();
    let verdict = if cells.len() >= MIN_VERDICT_POINTS
        && monotone(&ratios, &se, true)
        && ratios.last().is_some_and(|&r| r < VANISHING_THRESHOLD)
    {
        Verdict::Vanishing
    } else {
        Verdict::Inconclusive
    };
    Ok(ObservableReport {
        q,
        delta,
        rho,
        exact,
        cells,
        verdict,
        mc: if exact { 0 } else { mc },
        seed: rng.seed(),
    })
}

fn moment_gap_mc(
    sys: &OUSystem,
    x: &[f64],
    q: f64,
    t: f64,
    stationary: &[Vec<f64>],
    rng: &RngStream,
) -> Result<(f64, f64)> {
    let n = stationary.len();
    let sampler = MarginalSampler::new(sys, t)?;
    let zero = vec![0.0; sys.dim()];
    let z = sampler.sample_many(&zero, n, rng)?;
    let e = sampler.propagator();
    let ex = e.matvec_unchecked(x);
    let terms: Vec<f64> = z
        .par_iter()
        .zip(stationary)
        .map(|(zi, y)| {
            let ey = e.matvec_unchecked(y);
            let a: Vec<f64> = zi.iter().zip(&ex).map(|(u, v)| u + v).collect();
            let b: Vec<f64> = zi.iter().zip(&ey).map(|(u, v)| u + v).collect();
            norm2(&a).powf(q) - norm2(&b).powf(q)
        })
        .collect();
    let nf = n as f64;
    let mean = terms.iter().sum::<f64>() / nf;
    let var = terms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    Ok((mean, (var / nf).sqrt()))
}
