use std::fs;
use std::path::{Path, PathBuf};

use ou_cutoff::format::matrix_from_csv;
use ou_cutoff::linalg::Matrix;
use ou_cutoff::models::{jacobi_system_with_noise, oscillator_system, JacobiParams, OscillatorParams};
use ou_cutoff::noise::NoiseSpec;
use ou_cutoff::ou::{build_system, OUSystem, Scheme};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment description, read from a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Driver; a Brownian motion matching the columns of `σ` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Initial state; the first unit vector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    /// Window offsets in multiples of `1/ρₓ`.
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    /// Monte-Carlo sample count.
    #[serde(default = "default_mc")]
    pub mc: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableConfig>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub figure1: Figure1Config,
}

fn default_p() -> f64 {
    2.0
}

fn default_eps_grid() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}

fn default_delta_grid() -> Vec<f64> {
    vec![0.5, 0.75, 1.5, 2.0]
}

fn default_r_grid() -> Vec<f64> {
    vec![-10.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 10.0]
}

fn default_mc() -> usize {
    10_000
}

fn default_window() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum SystemConfig {
    Oscillator(OscillatorParams),
    Jacobi(JacobiParams),
    /// `A` and `σ` given inline or as CSV files (relative to the config file).
    Explicit(ExplicitSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSystem {
    pub a: MatrixSource,
    pub sigma: MatrixSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub q: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    /// End time; `10/ρ_min` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub steps: usize,
    pub scheme: Scheme,
    pub stationary_samples: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { paths: 1, horizon: None, steps: 1000, scheme: Scheme::Auto, stationary_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    /// Last time of the curve; `10/γ` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub points: usize,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self { t_max: None, points: 1001 }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))
    }

    /// Reads a config file; CSV matrix paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let SystemConfig::Explicit(sys) = &mut cfg.system {
            for src in [&mut sys.a, &mut sys.sigma] {
                if let MatrixSource::Csv(p) = src {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    fn matrices(&self) -> Result<Option<(Matrix, Matrix)>, CliError> {
        let SystemConfig::Explicit(sys) = &self.system else {
            return Ok(None);
        };
        Ok(Some((read_matrix(&sys.a)?, read_matrix(&sys.sigma)?)))
    }

    fn noise_dim(&self) -> Result<usize, CliError> {
        Ok(match &self.system {
            SystemConfig::Oscillator(_) | SystemConfig::Jacobi(_) => 2,
            SystemConfig::Explicit(_) => self.matrices()?.map_or(0, |(_, s)| s.cols()),
        })
    }

    /// Every default filled in, matrices inlined, so the result re-parses to
    /// the same experiment wherever it is stored.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let mut cfg = self.clone();
        if let Some((a, s)) = self.matrices()? {
            cfg.system = SystemConfig::Explicit(ExplicitSystem {
                a: MatrixSource::Inline(rows(&a)),
                sigma: MatrixSource::Inline(rows(&s)),
            });
        }
        if cfg.noise.is_none() {
            cfg.noise = Some(NoiseSpec::Brownian { dim: self.noise_dim()? });
        }
        if cfg.x.is_none() {
            let m = self.state_dim()?;
            let mut x = vec![0.0; m];
            x[0] = 1.0;
            cfg.x = Some(x);
        }
        Ok(cfg)
    }

    fn state_dim(&self) -> Result<usize, CliError> {
        Ok(match &self.system {
            SystemConfig::Oscillator(_) => 2,
            SystemConfig::Jacobi(p) => 2 * p.m,
            SystemConfig::Explicit(_) => self.matrices()?.map_or(0, |(a, _)| a.rows()),
        })
    }

    pub fn build_system(&self) -> Result<OUSystem, CliError> {
        let noise = match &self.noise {
            Some(n) => n.clone(),
            None => NoiseSpec::Brownian { dim: self.noise_dim()? },
        };
        let sys = match &self.system {
            SystemConfig::Oscillator(p) => {
                if noise != (NoiseSpec::Brownian { dim: 2 }) {
                    return Err(CliError::validation(
                        "the oscillator preset is Brownian-driven; use an explicit system for other noise",
                    ));
                }
                oscillator_system(p)?
            }
            SystemConfig::Jacobi(p) => jacobi_system_with_noise(p, noise)?,
            SystemConfig::Explicit(_) => {
                let (a, s) = self.matrices()?.expect("explicit system");
                build_system(a, s, noise)?
            }
        };
        Ok(sys)
    }

    pub fn initial_state(&self) -> Result<Vec<f64>, CliError> {
        match &self.x {
            Some(x) => Ok(x.clone()),
            None => {
                let mut x = vec![0.0; self.state_dim()?];
                x[0] = 1.0;
                Ok(x)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.eps_grid.is_empty() || self.delta_grid.is_empty() || self.r_grid.is_empty() {
            return Err(CliError::validation("grids must be nonempty"));
        }
        if self.seed.is_none() {
            return Err(CliError::validation("a seed is required (config key `seed` or --seed)"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn read_matrix(src: &MatrixSource) -> Result<Matrix, CliError> {
    match src {
        MatrixSource::Inline(rows) => Ok(Matrix::from_rows(rows)?),
        MatrixSource::Csv(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            Ok(matrix_from_csv(&text)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"system": {"preset": "jacobi", "gamma": 0.02}, "seed": 1}"#)
            .unwrap();
        let SystemConfig::Jacobi(p) = &cfg.system else { panic!("{cfg:?}") };
        assert_eq!(p.gamma, 0.02);
        assert_eq!(p.m, 5);
        assert_eq!(cfg.eps_grid.len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"system": {"preset": "oscillator"}, "sed": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"system": {"preset": "oscillator", "kapa": 1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"system": {"preset": "pendulum"}}"#).is_err());
    }

    #[test]
    fn resolved_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"system": {"preset": "explicit", "a": [[1, 0], [0, 2]], "sigma": [[1, 0], [0, 1]]},
                "noise": {"type": "alpha_stable", "dim": 2, "alpha": 1.5, "scale": 1.0},
                "seed": 7}"#,
        )
        .unwrap();
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.x, Some(vec![1.0, 0.0]));
        let text = serde_json::to_string_pretty(&resolved).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), resolved);
    }

    #[test]
    fn missing_seed_fails_validation() {
        let cfg = ExperimentConfig::from_json(r#"{"system": {"preset": "oscillator"}}"#).unwrap();
        assert_eq!(cfg.validate().unwrap_err().code, 2);
    }
}
