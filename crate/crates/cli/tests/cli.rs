use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use ou_cutoff_cli::config::ExperimentConfig;
use ou_cutoff_cli::{main_with_args, run, Cli, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn oucut(command: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["oucut".to_string(), command.to_string()];
    args.extend(["--config".into(), config.display().to_string(), "--out".into(), out.display().to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    // same exit codes as the binary, without printing the summary
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli).map_or_else(|e| e.code, |_| EXIT_OK),
        Err(_) => EXIT_VALIDATION,
    }
}

fn run_err(command: &str, config: &Path, out: &Path) -> ou_cutoff_cli::CliError {
    let cli = Cli::try_parse_from([
        "oucut",
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    run(&cli).unwrap_err()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const DIAG12: &str = r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]},
    "x": [1, 0], "seed": 11}"#;

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"system": {"preset": "explicit", "a": [[1, 0.5], [-0.5, 2]], "sigma": [[1, 0], [0, 1]]},
            "noise": {"type": "alpha_stable", "dim": 2, "alpha": 1.5, "scale": 0.5},
            "x": [1, -1], "seed": 3, "simulate": {"paths": 3, "steps": 200, "stationary_samples": 50}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(oucut("simulate", &cfg, &a, &[]), EXIT_OK);
    assert_eq!(oucut("simulate", &cfg, &b, &["--threads", "2"]), EXIT_OK);
    for name in ["paths.csv", "stationary.csv", "resolved_config.json", "VERSION"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = dir.path().join("c");
    assert_eq!(oucut("simulate", &cfg, &c, &["--seed", "4"]), EXIT_OK);
    assert_ne!(fs::read(a.join("paths.csv")).unwrap(), fs::read(c.join("paths.csv")).unwrap());
}

#[test]
fn requested_paths_appear_as_blocks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"system": {"preset": "oscillator"}, "seed": 1,
            "simulate": {"paths": 4, "steps": 50, "horizon": 5.0, "stationary_samples": 10}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(oucut("simulate", &cfg, &out, &[]), EXIT_OK);
    let text = fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2"));
    let starts = lines.filter(|l| l.split(',').next() == Some("0")).count();
    assert_eq!(starts, 4);
    assert_eq!(text.lines().count(), 1 + 4 * 51);
    assert_eq!(fs::read_to_string(out.join("stationary.csv")).unwrap().lines().count(), 11);
}

#[test]
fn noiseless_path_follows_the_matrix_exponential() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 3]], "sigma": [[0, 0], [0, 0]]},
            "x": [2, -1], "seed": 5, "simulate": {"steps": 100, "horizon": 2.0, "stationary_samples": 1}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(oucut("simulate", &cfg, &out, &[]), EXIT_OK);
    let text = fs::read_to_string(out.join("paths.csv")).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (t, x1, x2) = (v[0], v[1], v[2]);
        assert!((x1 - 2.0 * (-t).exp()).abs() <= 1e-12, "t = {t}");
        assert!((x2 + (-3.0 * t).exp()).abs() <= 1e-12, "t = {t}");
    }
}

#[test]
fn resolved_config_round_trips() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.csv"), "1,0.5\n-0.5,2\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"system": {"preset": "explicit", "a": "a.csv", "sigma": [[1, 0], [0, 1]]},
            "noise": {"type": "drift", "gamma": [1, 0]}, "seed": 8, "p": 1.5}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(oucut("analyze", &cfg, &out, &[]), EXIT_OK);
    let resolved = ExperimentConfig::load(&out.join("resolved_config.json")).unwrap();
    let mut expected = ExperimentConfig::load(&cfg).unwrap().resolved().unwrap();
    expected.out = None;
    assert_eq!(resolved, expected);
    assert_eq!(resolved.resolved().unwrap(), resolved);
    assert!(fs::read_to_string(out.join("VERSION")).unwrap().starts_with("oucut "));
}

#[test]
fn unstable_matrix_is_a_validation_error_naming_the_eigenvalue() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"system": {"preset": "explicit", "a": [[-1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]}, "seed": 1}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(oucut("analyze", &cfg, &out, &[]), EXIT_VALIDATION);
    let err = run_err("analyze", &cfg, &out);
    assert_eq!(err.code, EXIT_VALIDATION);
    assert!(err.message.contains("-1"), "{}", err.message);
    assert!(!out.exists());
}

#[test]
fn stationary_mean_start_is_rejected() {
    let dir = TempDir::new().unwrap();
    // m∞ = A⁻¹γ = (1, 0.5)
    let cfg = write_config(
        dir.path(),
        "mean.json",
        r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]},
            "noise": {"type": "sum", "parts": [{"type": "brownian", "dim": 2}, {"type": "drift", "gamma": [1, 1]}]},
            "x": [1, 0.5], "seed": 1}"#,
    );
    let out = dir.path().join("out");
    let err = run_err("cutoff", &cfg, &out);
    assert_eq!(err.code, EXIT_VALIDATION);
    assert!(err.message.contains("degenerate initial state"), "{}", err.message);
    assert_eq!(oucut("cutoff", &cfg, &out, &[]), EXIT_VALIDATION);
}

#[test]
fn config_errors_exit_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let no_seed = write_config(dir.path(), "a.json", r#"{"system": {"preset": "oscillator"}}"#);
    assert_eq!(oucut("analyze", &no_seed, &out, &[]), EXIT_VALIDATION);
    assert_eq!(oucut("analyze", &no_seed, &out, &["--seed", "1"]), EXIT_OK);
    let typo = write_config(dir.path(), "b.json", r#"{"system": {"preset": "oscillator"}, "seeds": 1}"#);
    assert_eq!(oucut("analyze", &typo, &out, &[]), EXIT_VALIDATION);
    assert_eq!(oucut("analyze", &dir.path().join("missing.json"), &out, &[]), EXIT_VALIDATION);
    assert_eq!(main_with_args(["oucut", "bogus"]), EXIT_VALIDATION);
    assert_eq!(main_with_args(["oucut", "--version"]), EXIT_OK);
    let zero = write_config(dir.path(), "c.json", r#"{"system": {"preset": "oscillator"}, "seed": 1}"#);
    assert_eq!(oucut("analyze", &zero, &out, &["--threads", "0"]), EXIT_VALIDATION);
}

#[test]
fn analyze_reports_presets() {
    let dir = TempDir::new().unwrap();
    let osc = write_config(dir.path(), "o.json", r#"{"system": {"preset": "oscillator", "gamma": 0.3}, "seed": 1}"#);
    let out = dir.path().join("o");
    assert_eq!(oucut("analyze", &osc, &out, &[]), EXIT_OK);
    let report = read_json(&out.join("analysis.json"));
    assert!((report["rho_x"].as_f64().unwrap() - 0.15).abs() <= 1e-12);
    assert_eq!(report["generic"], Value::Bool(true));
    assert_eq!(report["mean_condition"], Value::Bool(true));

    let jac = write_config(dir.path(), "j.json", r#"{"system": {"preset": "jacobi"}, "seed": 1}"#);
    let out = dir.path().join("j");
    assert_eq!(oucut("analyze", &jac, &out, &[]), EXIT_OK);
    let report = read_json(&out.join("analysis.json"));
    assert!((report["rho_x"].as_f64().unwrap() - 0.0263377).abs() <= 1e-4);
    assert_eq!(report["eigenvalues"].as_array().unwrap().len(), 10);
}

#[test]
fn cutoff_on_diagonal_system() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "d.json", DIAG12);
    let out = dir.path().join("out");
    assert_eq!(oucut("cutoff", &cfg, &out, &[]), EXIT_OK);
    let summary = read_json(&out.join("cutoff.json"));
    assert_eq!(summary["exact"], Value::Bool(true));
    for v in summary["verdicts"].as_array().unwrap() {
        let delta = v["delta"].as_f64().unwrap();
        let expected = if delta < 1.0 { "diverging" } else { "vanishing" };
        assert_eq!(v["verdict"], expected, "delta {delta}");
    }
    assert_eq!(summary["seed"], 11);
    let csv = fs::read_to_string(out.join("dichotomy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eps,delta,t,ratio,route,verdict"));
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    let window = fs::read_to_string(out.join("window.csv")).unwrap();
    assert_eq!(window.lines().next(), Some("eps,r,t,lower_ratio,upper_ratio"));
}

#[test]
fn cutoff_with_observable_moments() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]},
            "x": [1, 0], "seed": 11, "window": false, "observable": {"q": 2, "delta": 2}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(oucut("cutoff", &cfg, &out, &[]), EXIT_OK);
    assert!(!out.join("window.csv").exists());
    let summary = read_json(&out.join("cutoff.json"));
    assert_eq!(summary["observable"]["verdict"], "vanishing");
    let csv = fs::read_to_string(out.join("observable.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eps,t,gap,gap_se,ratio,ratio_se"));

    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]},
            "x": [1, 0], "seed": 11, "observable": {"q": 2, "delta": 0.5}}"#,
    );
    assert_eq!(oucut("cutoff", &bad, &dir.path().join("bad"), &[]), EXIT_VALIDATION);
}

#[test]
fn figure1_band() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "f.json", r#"{"system": {"preset": "oscillator"}, "seed": 1}"#);
    let out = dir.path().join("out");
    assert_eq!(oucut("figure1", &cfg, &out, &[]), EXIT_OK);
    let text = fs::read_to_string(out.join("figure1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 1001);
    assert_eq!(rows.last().unwrap().0, 100.0);
    let band: Vec<f64> = rows.iter().filter(|(t, _)| (50.0..=100.0).contains(t)).map(|r| r.1).collect();
    assert!(band.iter().all(|&v| v > 0.0 && v.is_finite()));
    let maxima = band.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
    let minima = band.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count();
    assert!(maxima >= 3 && minima >= 3, "{maxima} maxima, {minima} minima");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        cfg.build_system().unwrap();
        n += 1;
    }
    assert!(n >= 3);
}
