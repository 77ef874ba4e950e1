//! `bdi-lab`: tables, moments, PMF cross sections, exact simulation,
//! validation and plots for the time-varying birth-death-immigration model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;
mod plot;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "bdi-lab", version, about = "Birth-death-immigration analytics and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the number of runs from the config.
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cumulative integral tables and derived quantities as CSV.
    Tables,
    /// Analytic means, variance, cv, P0 and daily expectations as CSV.
    Moments,
    /// Analytic PMF cross sections as CSV.
    Pmf,
    /// Simulate the ensemble: per-run event logs, daily CSVs, summary JSON.
    Simulate,
    /// Compare a simulated ensemble against the analytics; exit 1 on failure.
    Validate,
    /// SVG figures: path overlays (linear/semi-log) and daily bars.
    Plot,
}

const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();

    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_USAGE);
    };
    let mut config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(runs) = cli.runs {
        if runs == 0 {
            eprintln!("error: --runs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        config.n_runs = runs;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }

    let outcome = match cli.command {
        Command::Tables => commands::cmd_tables(&config).map(|()| true),
        Command::Moments => commands::cmd_moments(&config).map(|()| true),
        Command::Pmf => commands::cmd_pmf(&config).map(|()| true),
        Command::Simulate => commands::cmd_simulate(&config).map(|()| true),
        Command::Validate => commands::cmd_validate(&config),
        Command::Plot => plot::cmd_plot(&config).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
