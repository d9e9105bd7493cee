use std::fs;
use std::path::Path;

use ou_cutoff::cutoff::{
    dichotomy_sweep, observable_precutoff, rate_analysis, window_profile, DIVERGING_THRESHOLD,
    MIN_VERDICT_POINTS, SE_TOLERANCE, VANISHING_THRESHOLD,
};
use ou_cutoff::format::g17;
use ou_cutoff::linalg::norm2;
use ou_cutoff::models::{oscillator_band_curve, OscillatorParams};
use ou_cutoff::ou::{paths_to_csv, sample_stationary, samples_to_csv, simulate_paths, stationary_mean};
use ou_cutoff::rng::RngStream;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, SystemConfig};
use crate::{CliError, VERSION};

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Creates `out` and records the resolved config and the version string.
fn prepare_output(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    let mut resolved = cfg.resolved()?;
    resolved.out = None;
    write(out, "resolved_config.json", &to_json(&resolved))?;
    write(out, "VERSION", &format!("oucut {VERSION}\n"))
}

/// Spectrum, structural flags and the decay rate of the initial state;
/// written to `analysis.json`.
pub fn cmd_analyze(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let sys = cfg.build_system()?;
    let x = cfg.initial_state()?;
    sys.check_state(&x)?;
    prepare_output(cfg, out)?;
    let eigenvalues: Vec<Value> =
        sys.eigenvalues().iter().map(|l| json!({"re": l.re, "im": l.im})).collect();
    let m_inf = stationary_mean(&sys);
    let gap: Vec<f64> = x.iter().zip(&m_inf).map(|(a, b)| a - b).collect();
    let mean_condition = norm2(&gap) > 1e-12 * (1.0 + norm2(&m_inf));
    let mut report = json!({
        "dim": sys.dim(),
        "noise_dim": sys.noise_dim(),
        "eigenvalues": eigenvalues,
        "hurwitz": sys.is_hurwitz(),
        "generic": sys.is_generic(),
        "normal": sys.is_normal(),
        "symmetric": sys.is_symmetric(),
        "rho_min": sys.rho_min(),
        "stationary_mean": m_inf,
        "x": x,
        "mean_condition": mean_condition,
        "seed": cfg.seed,
    });
    match rate_analysis(&sys, &x) {
        Ok(r) => {
            report["rho_x"] = json!(r.rho_x);
            report["c1"] = json!(r.c1);
            report["c2"] = json!(r.c2);
            report["active"] = json!(r.active);
            report["resonant"] = json!(r.resonant);
            report["envelope_horizon"] = json!(r.horizon);
        }
        Err(e) => {
            report["rho_x"] = Value::Null;
            report["rate_error"] = json!(e.to_string());
        }
    }
    write(out, "analysis.json", &to_json(&report))?;
    Ok(report)
}

/// Sample paths (`paths.csv`) and a stationary sample (`stationary.csv`).
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let sys = cfg.build_system()?;
    let x = cfg.initial_state()?;
    let s = &cfg.simulate;
    let horizon = s.horizon.unwrap_or(10.0 / sys.rho_min());
    let rng = RngStream::new(cfg.seed(), 0);
    let paths = simulate_paths(&sys, &x, horizon, s.steps, s.paths, s.scheme, &rng.fork(1))?;
    let stationary = sample_stationary(&sys, s.stationary_samples, &rng.fork(2))?;
    prepare_output(cfg, out)?;
    write(out, "paths.csv", &paths_to_csv(&paths))?;
    write(out, "stationary.csv", &samples_to_csv(&stationary, sys.dim()))?;
    Ok(json!({
        "paths": paths.len(),
        "steps": s.steps,
        "horizon": horizon,
        "stationary_samples": stationary.len(),
        "seed": cfg.seed,
    }))
}

/// Dichotomy sweep (`dichotomy.csv`), window profile (`window.csv`),
/// optional moment gaps (`observable.csv`) and the summary `cutoff.json`.
pub fn cmd_cutoff(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let sys = cfg.build_system()?;
    let x = cfg.initial_state()?;
    let rng = RngStream::new(cfg.seed(), 0);
    let report = dichotomy_sweep(&sys, &x, cfg.p, &cfg.eps_grid, &cfg.delta_grid, cfg.mc, &rng.fork(1))?;
    let window = if cfg.window {
        let r_grid: Vec<f64> = cfg.r_grid.iter().map(|r| r / report.rho_x).collect();
        Some(window_profile(&sys, &x, cfg.p, &cfg.eps_grid, &r_grid, cfg.mc, &rng.fork(2))?)
    } else {
        None
    };
    let observable = match &cfg.observable {
        Some(o) => Some(observable_precutoff(&sys, &x, o.q, &cfg.eps_grid, o.delta, cfg.mc, &rng.fork(3))?),
        None => None,
    };

    prepare_output(cfg, out)?;
    write(out, "dichotomy.csv", &report.to_csv())?;
    let verdicts: Vec<Value> = report
        .verdicts
        .iter()
        .map(|v| {
            json!({
                "delta": v.delta,
                "verdict": v.verdict.as_str(),
                "route": v.route.as_str(),
                "ratios": v.ratios,
                "loglog_slope": v.loglog_slope,
            })
        })
        .collect();
    let mut summary = json!({
        "x": report.x,
        "p": report.p,
        "rho_x": report.rho_x,
        "lower_route_rate": report.lower_route_rate,
        "rates_differ": report.rates_differ,
        "mean_condition": report.mean_condition,
        "origin_branch": report.origin_branch,
        "exact": report.exact,
        "eps_grid": report.eps_grid,
        "delta_grid": report.delta_grid,
        "t_eps": report.t_eps,
        "verdicts": verdicts,
        "thresholds": {
            "vanishing": VANISHING_THRESHOLD,
            "diverging": DIVERGING_THRESHOLD,
            "min_points": MIN_VERDICT_POINTS,
            "se_tolerance": SE_TOLERANCE,
        },
        "mc": report.mc,
        "seed": cfg.seed,
    });
    if let Some(w) = &window {
        write(out, "window.csv", &w.to_csv())?;
        summary["window"] = json!({ "r_grid": w.r_grid, "summary": w.summary, "exact": w.exact });
    }
    if let Some(o) = &observable {
        write(out, "observable.csv", &o.to_csv())?;
        summary["observable"] = json!({
            "q": o.q,
            "delta": o.delta,
            "rho": o.rho,
            "exact": o.exact,
            "verdict": o.verdict.as_str(),
        });
    }
    write(out, "cutoff.json", &to_json(&summary))?;
    Ok(summary)
}

/// Oscillator band curve on `[0, t_max]` (`figure1.csv`, columns `t,value`).
pub fn cmd_figure1(cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let params = match &cfg.system {
        SystemConfig::Oscillator(p) => *p,
        _ => OscillatorParams::default(),
    };
    let f = &cfg.figure1;
    if f.points < 2 {
        return Err(CliError::validation("figure1.points must be >= 2"));
    }
    let t_max = f.t_max.unwrap_or(10.0 / params.gamma);
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::validation(format!("figure1.t_max must be positive, got {t_max}")));
    }
    let grid: Vec<f64> = (0..f.points).map(|k| t_max * k as f64 / (f.points - 1) as f64).collect();
    let values = oscillator_band_curve(&params, &grid)?;
    prepare_output(cfg, out)?;
    let mut csv = String::from("t,value\n");
    for (t, v) in grid.iter().zip(&values) {
        csv.push_str(&format!("{},{}\n", g17(*t), g17(*v)));
    }
    write(out, "figure1.csv", &csv)?;

    let band: Vec<f64> = grid
        .iter()
        .zip(&values)
        .filter(|(&t, _)| t >= 5.0 / params.gamma && t <= 10.0 / params.gamma)
        .map(|(_, &v)| v)
        .collect();
    let maxima = band.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
    let minima = band.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count();
    Ok(json!({
        "kappa": params.kappa,
        "gamma": params.gamma,
        "varsigma": params.varsigma,
        "points": grid.len(),
        "band_min": band.iter().copied().reduce(f64::min),
        "band_max": band.iter().copied().reduce(f64::max),
        "band_local_maxima": maxima,
        "band_local_minima": minima,
    }))
}
