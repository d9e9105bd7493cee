//! Batch experiments for cutoff stability of Ornstein-Uhlenbeck systems:
//! config parsing, subcommand dispatch and CSV/JSON output.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_analyze, cmd_cutoff, cmd_figure1, cmd_simulate};
pub use config::ExperimentConfig;

/// Package version plus the `git describe` output at build time.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("OUCUT_GIT_DESCRIBE"), ")");

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

/// Failure carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ou_cutoff::Error> for CliError {
    fn from(e: ou_cutoff::Error) -> Self {
        use ou_cutoff::Error as E;
        let code = match &e {
            E::Numerical(_) | E::NoConvergence { .. } | E::BlowUp { .. } => EXIT_NUMERICAL,
            E::Capacity(_) => EXIT_CAPACITY,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "oucut", version = VERSION, about = "Cutoff stability experiments for Ornstein-Uhlenbeck systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Spectrum, flags and decay rate of the initial state.
    Analyze,
    /// Sample paths and a stationary sample.
    Simulate,
    /// Dichotomy sweep, window profile and moment gaps.
    Cutoff,
    /// Oscillator band curve `e^{2γt} W₂²(X_t(0), μ)`.
    Figure1,
}

/// Loads the config, applies flag overrides and runs the subcommand.
pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::validation("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let job = || match cli.command {
        Command::Analyze => cmd_analyze(&cfg, &out),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Cutoff => cmd_cutoff(&cfg, &out),
        Command::Figure1 => cmd_figure1(&cfg, &out),
    };
    match cli.threads {
        Some(0) => Err(CliError::validation("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::io(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let text = serde_json::to_string_pretty(&summary).expect("serializable");
            let _ = writeln!(std::io::stdout(), "{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
