//! `fairmargin` command-line harness.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for configuration or
//! usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FAIRMARGIN_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "fairmargin",
    version,
    about = "Worst-group equalized-odds margin regularization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort CSV from the `[cohort]` section.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path [default: $FAIRMARGIN_OUT/cohort.csv].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `cohort.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model per seed and write checkpoints, traces and reports.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-evaluate a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cohort CSV to evaluate on.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        dataset: Option<PathBuf>,
        /// Config whose cohort or dataset to evaluate on.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report of a reference model, for ΔAUC.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Method name recorded in the report.
        #[arg(long, default_value = "model")]
        method: String,
        /// Report format when no config is given.
        #[arg(long, value_parser = ["json", "toml"])]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline vs regularized comparison over seeds.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Baseline, EO⁺-only, EO⁻-only and both-term arms over seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `out_dir`, else $FAIRMARGIN_OUT/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides `train.seeds`.
    #[arg(long, value_delimiter = ',', alias = "seed")]
    seeds: Option<Vec<u64>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data(&config, out, seed),
        Command::Train { run } => commands::train(&run.config, run.out, run.seeds),
        Command::Evaluate {
            checkpoint,
            dataset,
            config,
            baseline,
            method,
            format,
            out,
        } => commands::evaluate(commands::EvaluateArgs {
            checkpoint,
            dataset,
            config,
            baseline,
            method,
            format,
            out,
        }),
        Command::Experiment { run, jobs } => {
            commands::compare(commands::Protocol::Experiment, &run.config, run.out, run.seeds, jobs)
        }
        Command::Ablate { run, jobs } => commands::compare(commands::Protocol::Ablation, &run.config, run.out, run.seeds, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
