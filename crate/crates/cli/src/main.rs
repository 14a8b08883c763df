use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] consolidate_core::Error),
}

impl CliError {
    /// 2 for bad input, 3 for an internal invariant violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(consolidate_core::Error::Invariant(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "consolidate", version, about = "Group answer sentences into aspects and evaluate groupings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Opts {
    /// TOML file with default values for any option below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus statistics (and annotation agreement when annotations are given)
    Stats(Opts),
    /// Aggregate crowd annotations into gold partitions
    Aggregate(Opts),
    /// Draw the 80/10/10 train/validation/test split
    Split(Opts),
    /// Write pairwise score matrices
    Score(Opts),
    /// Cluster scored questions at a fixed threshold
    Cluster(Opts),
    /// Select pair and cluster thresholds on the validation split
    Sweep(Opts),
    /// Evaluate predictions against gold partitions
    Evaluate(Opts),
    /// split, score, sweep, cluster and evaluate in one go
    Run(Opts),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

type Handler = fn(&RunConfig) -> Result<(), CliError>;

fn dispatch(command: Command) -> Result<(), CliError> {
    let (opts, run): (Opts, Handler) = match command {
        Command::Stats(o) => (o, commands::stats),
        Command::Aggregate(o) => (o, commands::aggregate),
        Command::Split(o) => (o, commands::split),
        Command::Score(o) => (o, commands::score),
        Command::Cluster(o) => (o, commands::cluster),
        Command::Sweep(o) => (o, commands::sweep),
        Command::Evaluate(o) => (o, commands::evaluate),
        Command::Run(o) => (o, commands::run),
    };
    let cfg = opts.run.resolve(opts.config.as_deref())?;
    cfg.check_paths()?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    run(&cfg)
}
