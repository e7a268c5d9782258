//! `timo`: simulations, envelope fits, sweeps and resolvent checks.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 I/O.

mod commands;
mod error;
mod series;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timo_core::config::{preset, ExperimentConfig};

use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "timo", version, about = "Timoshenko beam with second-sound heat conduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSV and summary.
    Simulate(Common),
    /// Fit a decay envelope to an existing CSV series.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        series: PathBuf,
    },
    /// Run every point of the config's sweep axes.
    Sweep(Common),
    /// Solve the stationary problem on refined grids and report.
    ResolventCheck(Common),
}

fn load(common: &Common) -> CliResult<(ExperimentConfig, PathBuf)> {
    let cfg = match (&common.config, &common.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => preset(name)?,
        _ => return Err(CliError::Usage("exactly one of --config or --preset is required".into())),
    };
    let cfg = cfg.resolve(common.seed)?;
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    Ok((cfg, dir))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(c) => {
            let (cfg, dir) = load(c)?;
            commands::simulate(&cfg, &dir)
        }
        Command::Fit { common, series } => {
            let (cfg, dir) = load(common)?;
            commands::fit(&cfg, &dir, Path::new(series))
        }
        Command::Sweep(c) => {
            let (cfg, dir) = load(c)?;
            commands::sweep(&cfg, &dir)
        }
        Command::ResolventCheck(c) => {
            let (cfg, dir) = load(c)?;
            commands::resolvent(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIMO_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
