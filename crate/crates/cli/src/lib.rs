//! Config-driven experiment runner on top of `kpl`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kpl", version, about = "Kernel projection learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed, overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Draw a toy dataset and write it as CSV.
    GenerateToy,
    /// Fit every configured method and save the models.
    Fit,
    /// Predict with a saved model.
    Predict,
    /// Mean squared error of predictions against observations.
    Evaluate,
    /// K-fold cross-validation over all methods and parameter grids.
    Cv,
    /// Corruption sweep on clean test data.
    Robustness,
    /// Learn a dictionary from the training outputs.
    Dictlearn,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = config::ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if !kpl::par::set_threads(t) {
            log::warn!("could not resize the worker pool; using the default");
        }
    }
    let out = commands::out_dir(&cfg, cli.out.as_ref())?;
    match cli.command {
        Command::GenerateToy => commands::generate_toy(&cfg, &out),
        Command::Fit => commands::run_fit(&cfg, &out),
        Command::Predict => commands::run_predict(&cfg, &out),
        Command::Evaluate => commands::run_evaluate(&cfg, &out),
        Command::Cv => commands::run_cv(&cfg, &out),
        Command::Robustness => commands::run_robustness(&cfg, &out),
        Command::Dictlearn => commands::run_dictlearn(&cfg, &out),
    }
}
