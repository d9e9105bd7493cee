use rayon::prelude::*;
use serde::Serialize;

use super::empirical::{wp_empirical, EmpiricalMeasure, MAX_EMPIRICAL_POINTS};
use super::gaussian::w2_gaussian;
use crate::error::{Error, Result};
use crate::format::g17;
use crate::linalg::{norm2, Matrix};
use crate::ou::{
    gaussian_marginal, propagator, sample_marginal, sample_stationary, sigma_inf, stationary_law,
    stationary_mean, OUSystem,
};
use crate::rng::RngStream;

pub const BOUNDS_CSV_HEADER: &str =
    "t,p,upper_shift,upper_disint,lower_shift,lower_mean,wp_estimate,mc_n,seed";

/// How `W_p(X_t(0), μ)` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WpRoute {
    /// Closed-form Gaussian `W₂` (an upper bound on `W_p` when `p < 2`).
    Gaussian,
    /// Smaller of the empirical assignment distance and the coupling bound.
    Empirical,
    /// Monte-Carlo estimate of `(E|e^{-At}Y|^p)^{1/p}`, `Y ~ μ`.
    Synchronous,
}

/// Upper and lower bounds on `W_p(X_t(x), μ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundBundle {
    pub t: f64,
    pub p: f64,
    /// `|e^{-At}x|`.
    pub shift_norm: f64,
    /// `|e^{-At}x| + W_p(X_t(0), μ)`.
    pub upper_shift: f64,
    /// `(E|e^{-At}(x - Y)|^p)^{1/p}`, `Y ~ μ`.
    pub upper_disintegration: f64,
    /// Standard error of `upper_disintegration` (0 when computed in closed form).
    pub upper_disintegration_se: f64,
    /// `max(0, |e^{-At}x| - W_p(X_t(0), μ))`.
    pub lower_shift: f64,
    /// `|e^{-At}x + E[X_t(0)] - E[X_∞]| = |e^{-At}(x - A⁻¹σE[L₁])|`, exact.
    pub lower_mean: f64,
    /// Estimate of `W_p(X_t(0), μ)`.
    pub wp_estimate: f64,
    /// Standard error of the coupling estimate of `W_p(X_t(0), μ)`.
    pub wp_estimate_se: f64,
    pub wp_route: WpRoute,
    /// True when nothing was estimated by sampling.
    pub closed_form: bool,
    pub mc_n: usize,
    pub seed: u64,
}

impl BoundBundle {
    /// `t,p,upper_shift,upper_disint,lower_shift,lower_mean,wp_estimate,mc_n,seed`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            g17(self.t),
            g17(self.p),
            g17(self.upper_shift),
            g17(self.upper_disintegration),
            g17(self.lower_shift),
            g17(self.lower_mean),
            g17(self.wp_estimate),
            self.mc_n,
            self.seed
        )
    }

    /// The better of the two upper bounds.
    pub fn upper(&self) -> f64 {
        self.upper_shift.min(self.upper_disintegration)
    }

    /// The better of the two lower bounds.
    pub fn lower(&self) -> f64 {
        self.lower_shift.max(self.lower_mean)
    }
}

pub(crate) fn check_order(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("order p must be positive and finite, got {p}")));
    }
    if p < 1.0 {
        return Err(Error::OutOfScope(format!(
            "bounds for p = {p} in (0, 1) are not implemented"
        )));
    }
    Ok(())
}

/// Bounds at time `t` for order `p >= 1`. Gaussian drivers with `p <= 2` are
/// handled in closed form; otherwise `mc` stationary samples are drawn from
/// `rng.fork(0)`.
pub fn ergodicity_bounds(
    sys: &OUSystem,
    x: &[f64],
    t: f64,
    p: f64,
    mc: usize,
    rng: &RngStream,
) -> Result<BoundBundle> {
    check_order(p)?;
    sys.check_state(x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    if sys.noise().gaussian_structure().is_some() && p <= 2.0 {
        return gaussian_bounds(sys, x, t, p, rng.seed());
    }
    if mc == 0 {
        return Err(Error::Domain("Monte-Carlo budget must be >= 1".into()));
    }
    let stationary = sample_stationary(sys, mc, &rng.fork(0))?;
    ergodicity_bounds_with_samples(sys, x, t, p, &stationary, &rng.fork(1))
}

fn gaussian_bounds(sys: &OUSystem, x: &[f64], t: f64, p: f64, seed: u64) -> Result<BoundBundle> {
    let e = propagator(sys, t)?;
    let shift_norm = norm2(&e.matvec_unchecked(x));
    let lower_mean = mean_gap(sys, &e, x);
    let zero = vec![0.0; sys.dim()];
    let w = w2_gaussian(&gaussian_marginal(sys, &zero, t)?, &stationary_law(sys)?)?;
    let cov = stationary_law(sys)?.cov;
    let pushed: Matrix = e.mul_unchecked(&cov).mul_unchecked(&e.transpose());
    let upper_disintegration = (lower_mean * lower_mean + pushed.trace().max(0.0)).sqrt();
    Ok(BoundBundle {
        t,
        p,
        shift_norm,
        upper_shift: shift_norm + w,
        upper_disintegration,
        upper_disintegration_se: 0.0,
        lower_shift: (shift_norm - w).max(0.0),
        lower_mean,
        wp_estimate: w,
        wp_estimate_se: 0.0,
        wp_route: WpRoute::Gaussian,
        closed_form: true,
        mc_n: 0,
        seed,
    })
}

fn mean_gap(sys: &OUSystem, e: &Matrix, x: &[f64]) -> f64 {
    let m_inf = stationary_mean(sys);
    let d: Vec<f64> = x.iter().zip(&m_inf).map(|(a, b)| a - b).collect();
    norm2(&e.matvec_unchecked(&d))
}

/// Monte-Carlo bounds from a caller-supplied stationary sample, so several
/// times can share one sample. The empirical assignment route is used when
/// the sample has at most 4096 points; its `X_t(0)` draws come from `rng`.
pub fn ergodicity_bounds_with_samples(
    sys: &OUSystem,
    x: &[f64],
    t: f64,
    p: f64,
    stationary: &[Vec<f64>],
    rng: &RngStream,
) -> Result<BoundBundle> {
    bounds_from_samples(sys, x, t, p, stationary, rng, true)
}

/// As [`ergodicity_bounds_with_samples`]; `empirical = false` skips the
/// assignment route and uses the coupling estimate alone.
pub(crate) fn bounds_from_samples(
    sys: &OUSystem,
    x: &[f64],
    t: f64,
    p: f64,
    stationary: &[Vec<f64>],
    rng: &RngStream,
    empirical: bool,
) -> Result<BoundBundle> {
    check_order(p)?;
    sys.check_state(x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    let n = stationary.len();
    if n == 0 {
        return Err(Error::Domain("empty stationary sample".into()));
    }
    let e = propagator(sys, t)?;
    let ex = e.matvec_unchecked(x);
    let shift_norm = norm2(&ex);
    let lower_mean = mean_gap(sys, &e, x);

    // per-sample |e^{-At}Y|^p and |e^{-At}(x - Y)|^p; summed in index order so
    // the result does not depend on the thread count
    let terms: Vec<(f64, f64)> = stationary
        .par_iter()
        .map(|y| {
            let ey = e.matvec_unchecked(y);
            let d: Vec<f64> = ex.iter().zip(&ey).map(|(u, v)| u - v).collect();
            (norm2(&ey).powf(p), norm2(&d).powf(p))
        })
        .collect();
    let (mut sync_sum, mut sync_sq, mut dis_sum, mut dis_sq) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in &terms {
        sync_sum += a;
        sync_sq += a * a;
        dis_sum += b;
        dis_sq += b * b;
    }
    let nf = n as f64;
    let synchronous = (sync_sum / nf).powf(1.0 / p);
    let dis_mean = dis_sum / nf;
    let upper_disintegration = dis_mean.powf(1.0 / p);
    let upper_disintegration_se = power_mean_se(dis_sum, dis_sq, n, p);
    let synchronous_se = power_mean_se(sync_sum, sync_sq, n, p);

    let (wp_estimate, wp_route) = if empirical && n <= MAX_EMPIRICAL_POINTS {
        let zero = vec![0.0; sys.dim()];
        let xt = sample_marginal(sys, &zero, t, n, rng)?;
        let emp = wp_empirical(
            &EmpiricalMeasure::new(xt)?,
            &EmpiricalMeasure::new(stationary.to_vec())?,
            p,
        )?;
        (emp.min(synchronous), WpRoute::Empirical)
    } else {
        (synchronous, WpRoute::Synchronous)
    };

    Ok(BoundBundle {
        t,
        p,
        shift_norm,
        upper_shift: shift_norm + wp_estimate,
        upper_disintegration,
        upper_disintegration_se,
        lower_shift: (shift_norm - wp_estimate).max(0.0),
        lower_mean,
        wp_estimate,
        wp_estimate_se: synchronous_se,
        wp_route,
        closed_form: false,
        mc_n: n,
        seed: rng.seed(),
    })
}

/// Standard error of `(mean of v)^{1/p}` by the delta method, from the sum
/// and sum of squares of `n` draws of `v`.
fn power_mean_se(sum: f64, sum_sq: f64, n: usize, p: f64) -> f64 {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 || mean <= 0.0 {
        return 0.0;
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt() * mean.powf(1.0 / p - 1.0) / p
}

/// `Tr(e^{-At} Σ_∞ e^{-Aᵀt})`, the stationary spread left after contraction.
pub fn contracted_spread(sys: &OUSystem, t: f64) -> Result<f64> {
    let e = propagator(sys, t)?;
    Ok(e.mul_unchecked(&sigma_inf(sys)?).mul_unchecked(&e.transpose()).trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{JumpLaw, NoiseSpec};
    use crate::ou::build_system;
    use crate::wasserstein::w2_normal_spectral;

    fn diag12() -> OUSystem {
        build_system(Matrix::from_diag(&[1.0, 2.0]), Matrix::identity(2), NoiseSpec::Brownian { dim: 2 })
            .unwrap()
    }

    #[test]
    fn sandwich_on_exact_branch() {
        let sys = diag12();
        let x = [1.0, 0.0];
        let rng = RngStream::new(0, 0);
        for k in 0..30 {
            let t = 0.1 + 0.25 * k as f64;
            let b = ergodicity_bounds(&sys, &x, t, 2.0, 0, &rng).unwrap();
            let w = w2_normal_spectral(&sys, &x, t).unwrap();
            assert!(b.closed_form);
            assert!(b.lower_shift <= w + 1e-15 && w <= b.upper_shift + 1e-15, "t = {t}");
            assert!(b.lower_mean <= w + 1e-15);
            assert!(w <= b.upper_disintegration + 1e-12);
        }
    }

    #[test]
    fn centered_origin_has_zero_mean_gap() {
        let sys = diag12();
        let b = ergodicity_bounds(&sys, &[0.0, 0.0], 1.0, 2.0, 0, &RngStream::new(0, 0)).unwrap();
        assert_eq!(b.lower_mean, 0.0);
        assert_eq!(b.shift_norm, 0.0);
    }

    #[test]
    fn mean_gap_for_drift() {
        let noise = NoiseSpec::CompoundPoisson {
            dim: 2,
            rate: 2.0,
            jump: JumpLaw::FixedAtoms { points: vec![vec![1.0, 0.0]], weights: vec![1.0] },
        };
        let sys = build_system(Matrix::from_diag(&[1.0, 2.0]), Matrix::identity(2), noise).unwrap();
        let t = 0.8;
        let b = ergodicity_bounds(&sys, &[0.0, 0.0], t, 1.0, 600, &RngStream::new(3, 0)).unwrap();
        // |A⁻¹ e^{-At} σ E[L₁]| = 2 e^{-t}
        assert!((b.lower_mean - 2.0 * (-t).exp()).abs() < 1e-14);
        assert!(b.lower_mean <= b.upper_shift + 3.0 * b.upper_disintegration_se);
        assert_eq!(b.wp_route, WpRoute::Empirical);
        assert_eq!(b.mc_n, 600);
    }

    #[test]
    fn rejects_small_orders() {
        let sys = diag12();
        let rng = RngStream::new(0, 0);
        assert!(matches!(
            ergodicity_bounds(&sys, &[1.0, 0.0], 1.0, 0.5, 10, &rng),
            Err(Error::OutOfScope(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let b = ergodicity_bounds(&diag12(), &[1.0, 0.0], 1.0, 2.0, 0, &RngStream::new(42, 0)).unwrap();
        let row = b.csv_row();
        assert_eq!(row.split(',').count(), BOUNDS_CSV_HEADER.split(',').count());
        assert!(row.starts_with("1,2,"));
        assert!(row.ends_with(",0,42"));
    }

    #[test]
    fn decay_rates() {
        // all bounds decay like e^{-t} for x = (1, 0)
        let sys = diag12();
        let x = [1.0, 0.0];
        let rng = RngStream::new(0, 0);
        let (t1, t2) = (6.0, 10.0);
        let b1 = ergodicity_bounds(&sys, &x, t1, 2.0, 0, &rng).unwrap();
        let b2 = ergodicity_bounds(&sys, &x, t2, 2.0, 0, &rng).unwrap();
        let slope = |a: f64, b: f64| (b.ln() - a.ln()) / (t2 - t1);
        for (a, b) in [
            (b1.upper_shift, b2.upper_shift),
            (b1.lower_shift, b2.lower_shift),
            (b1.lower_mean, b2.lower_mean),
        ] {
            assert!((slope(a, b) + 1.0).abs() < 0.02, "slope {}", slope(a, b));
        }
    }
}
