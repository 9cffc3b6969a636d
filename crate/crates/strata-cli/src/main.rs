//! Batch front-end for the clustering + sparse-interaction-model pipeline.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 data validation,
//! 3 numerical failure.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strata_core::error::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "strata", version, about = "Cluster-conditional sparse logistic regression pipeline")]
struct Cli {
    /// Run configuration (TOML). Required by every stage except synthesize.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the worker thread count (default: one per CPU).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (data.csv, schema.json, truth.json).
    Synthesize {
        /// Generator specification (TOML).
        #[arg(long)]
        spec: PathBuf,
    },
    /// Fit the k-medoids partition and store it with its medoids.
    Cluster {
        /// Cluster count override for this invocation.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Bootstrap stability curve and k* selection.
    Stability,
    /// Cross-validated sparse fit on the stored partition.
    Fit,
    /// Odds ratios and ratios of odds ratios from the stored fit.
    Effects,
    /// Bootstrap inference over the whole pipeline.
    Bootstrap,
    /// Assign new rows to clusters and score their outcome probability.
    Predict {
        /// CSV of feature rows to score.
        #[arg(long)]
        rows: PathBuf,
        /// Output CSV (default: <out>/predictions.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Human-readable summary of all artifacts present.
    Report,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Toml(_) => 1,
        Error::Data(_) | Error::Csv(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::invalid("--config is required for this subcommand"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(workers) = cli.workers {
        if workers > 0 {
            // Ignore failure: the pool may already exist in-process.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }
    match &cli.cmd {
        Cmd::Synthesize { spec } => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::invalid("--out is required for synthesize"))?;
            commands::cmd_synthesize(spec, &out, cli.seed.unwrap_or(0))
        }
        Cmd::Cluster { k } => commands::cmd_cluster(&load_config(cli)?, *k),
        Cmd::Stability => commands::cmd_stability(&load_config(cli)?),
        Cmd::Fit => commands::cmd_fit(&load_config(cli)?),
        Cmd::Effects => commands::cmd_effects(&load_config(cli)?),
        Cmd::Bootstrap => commands::cmd_bootstrap(&load_config(cli)?),
        Cmd::Predict { rows, output } => {
            commands::cmd_predict(&load_config(cli)?, rows, output.as_deref())
        }
        Cmd::Report => commands::cmd_report(&load_config(cli)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
