//! `oralytics`: fit environments, build priors and run simulation experiments.

mod commands;
mod config;
mod error;
mod manifest;
mod pilot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "oralytics", version, about = "Simulation testbed for the Oralytics prompt-delivery bandit")]
struct Cli {
    /// Log level: error, warn, info, debug.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit per-participant environment models from a brushing-session CSV.
    FitEnv(FitEnvArgs),
    /// Build the informative prior from pilot data.
    BuildPrior(BuildPriorArgs),
    /// Run every candidate in every environment variant.
    Run(ExperimentArgs),
    /// Grid search over the reward cost parameters for one candidate.
    Grid(ExperimentArgs),
    /// Compare a longer and a shorter prior-sampling period with paired seeds.
    ComparePriorPeriod(ExperimentArgs),
    /// Write a synthetic brushing-session CSV in the study export format.
    SynthRobas(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FitEnvArgs {
    /// Brushing-session CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for optimizer restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildPriorArgs {
    /// Pilot CSV; when missing the canonical prior is used.
    #[arg(long)]
    pub pilot: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment variant label, e.g. STAT_LOW_R-z8 (repeatable).
    #[arg(long)]
    pub variant: Vec<String>,
    /// Candidate label, e.g. b5.15-weekly-full (repeatable).
    #[arg(long)]
    pub candidate: Vec<String>,
    /// Reward cost parameters as `xi1,xi2` (repeatable for `grid`).
    #[arg(long)]
    pub xi: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Participants who must start before the shared posterior is used;
    /// `compare-prior-period` takes two values, longer first.
    #[arg(long, value_delimiter = ',')]
    pub prior_trigger: Vec<usize>,
    /// Execute precomputed action schedules as deployed.
    #[arg(long)]
    pub deployment_fidelity: bool,
    /// Worker threads; defaults to all available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Environment bundle from `fit-env`.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Brushing-session CSV to fit the environment from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Prior JSON from `build-prior`.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Also write every decision to `decisions.csv`.
    #[arg(long)]
    pub keep_logs: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "sessions.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 31)]
    pub participants: usize,
    #[arg(long, default_value_t = 20_240_901)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    let result: Result<(), CliError> = match cli.command {
        Command::FitEnv(a) => commands::fit_env(a),
        Command::BuildPrior(a) => commands::build_prior(a),
        Command::Run(a) => commands::run(a),
        Command::Grid(a) => commands::grid(a),
        Command::ComparePriorPeriod(a) => commands::compare_prior_period(a),
        Command::SynthRobas(a) => commands::synth_robas(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
