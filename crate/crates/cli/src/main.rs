//! `pslf` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pslf", version, about = "Hessian-free latent factor training with swarm-tuned hyperparameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the ratings and write the split manifest and part files.
    Split(CommonArgs),
    /// Train once with explicit (lambda, gamma); writes report, metrics and a snapshot.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Tune (lambda, gamma) over repeated splits and write the experiment report.
    Tune(CommonArgs),
    /// Print the RMSE of a factor snapshot on a ratings file.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        /// Id table written next to the snapshot by `train` (defaults to `<snapshot>.ids.json`).
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long, default_value = "::")]
        delimiter: String,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set swarm.num_particles=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Ratings file (overrides `data.path`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use generated data, e.g. `--synthetic "users=100 items=80 rank=3 density=0.3 noise=0.1 seed=1"`.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    /// Maximum number of parallel fitness evaluations.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "pslf-out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Split(common) => commands::split(&common),
        Command::Train {
            common,
            lambda,
            gamma,
        } => commands::train(&common, lambda, gamma),
        Command::Tune(common) => commands::tune(&common),
        Command::Evaluate {
            snapshot,
            ratings,
            ids,
            delimiter,
        } => commands::evaluate(&snapshot, &ratings, ids.as_deref(), &delimiter),
    };
    match result {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
