//! `thermoscheme`: pressure, equilibrium, condition-check and sweep runs
//! over inducing schemes.
//!
//! Exit status: 0 when the run computed (a nonliftable equilibrium is a
//! result), 2 for configuration or I/O errors, 3 for numerical failures,
//! 4 when an enumeration budget is exceeded.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thermoscheme::Error;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "thermoscheme", version, about = "Thermodynamic formalism over inducing schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gurevich pressure by transfer operator and periodic orbits.
    Pressure,
    /// Normalization, Gibbs measure, entropy, Q and the lifted measure.
    Equilibrium,
    /// Structural (H1–H5) and regularity (P1–P5) condition checks.
    Check,
    /// Normalization and liftability along the geometric family `−t log|Df|`.
    Sweep,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Catalog scheme, `NAME[:key=value,...]`.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// Custom scheme config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub scheme_file: Option<PathBuf>,
    /// `geometric:t`, `constant:c` or `expr:<f(x)>`.
    #[arg(long, global = true)]
    pub potential: Option<String>,
    /// Alphabet truncation.
    #[arg(long = "N", global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Depth of stored cylinder masses and condition checks.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Largest period for periodic-orbit sums.
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Chebyshev collocation nodes.
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    /// Cap on enumerated words for periodic-orbit sums.
    #[arg(long, global = true)]
    pub word_budget: Option<u64>,
    /// Cap on stored cylinder masses.
    #[arg(long, global = true)]
    pub mass_budget: Option<usize>,
    /// `start:end:step` or a comma-separated list (sweep).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_grid: Option<String>,
    /// Evaluate the pressure of `φ − s`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub shift_s: Option<f64>,
    /// Seed for correlation sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; without it the JSON document goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// `csv` (CSV plus JSON sidecar) or `json`.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// TOML run config; its keys override flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Conditions to check, comma-separated, or `all`.
    #[arg(long, global = true)]
    pub conditions: Option<String>,
    /// Constant for the P3 check (default: the normalizing s).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub p3_shift: Option<f64>,
    /// Observable to integrate against the lifted measure (repeatable).
    #[arg(long, global = true)]
    pub observable: Vec<String>,
    /// Observable whose correlation decay is sampled.
    #[arg(long, global = true)]
    pub correlation: Option<String>,
    #[arg(long, global = true)]
    pub lag_max: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot access `{path}`: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(..) => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::ConfigAt { .. } => 2,
                Error::Budget { .. } => 4,
                Error::Numerical(_) | Error::Precondition(_) | Error::Consistency(_) | Error::NotLiftable(_) => 3,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io(..) => "io",
            CliError::Core(e) => match e {
                Error::Config(_) | Error::ConfigAt { .. } => "config",
                Error::Budget { .. } => "budget",
                Error::Numerical(_) => "numerical",
                Error::Precondition(_) => "precondition",
                Error::Consistency(_) => "consistency",
                Error::NotLiftable(_) => "not_liftable",
            },
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("THERMOSCHEME_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("THERMOSCHEME_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut cfg = RunConfig::from_flags(&cli.flags)?;
    if let Some(path) = &cli.flags.config {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
        cfg.overlay_file(&src)?;
    }
    cfg.validate()?;
    match cli.command {
        Command::Pressure => commands::cmd_pressure(&cfg),
        Command::Equilibrium => commands::cmd_equilibrium(&cfg),
        Command::Check => commands::cmd_check(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("thermoscheme: {e}");
            eprintln!("{payload}");
            ExitCode::from(e.exit_code())
        }
    }
}
