//! Command-line front end: dataset generation, training, evaluation,
//! feature extraction, integrated matching and reports.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fplab::{Error, Result};

use crate::config::{Config, Settings};

#[derive(Debug, Parser)]
#[command(name = "fplab", version, about = "Fingerprint liveness detection lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// Experiment config (TOML, flat dotted keys).
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(ConfigArgs),
    /// Train the configured recipe.
    Train(ConfigArgs),
    /// Score a split and write PAD metric reports.
    Eval(ConfigArgs),
    /// Extract embeddings and time the extractor.
    Extract(ConfigArgs),
    /// Run the integrated matcher over generated trials.
    Match(ConfigArgs),
    /// Summarize every run under the output directory.
    Report(ConfigArgs),
    /// Print every configuration key with its default.
    ConfigReference,
}

pub fn load_config(args: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// Runs one command and returns its summary text.
pub fn run(cli: &Cli) -> Result<String> {
    let (args, cmd): (&ConfigArgs, fn(&Config, &Settings) -> Result<String>) = match &cli.command {
        Command::ConfigReference => return Ok(config::reference()),
        Command::GenData(a) => (a, commands::gen_data),
        Command::Train(a) => (a, commands::train),
        Command::Eval(a) => (a, commands::eval),
        Command::Extract(a) => (a, commands::extract),
        Command::Match(a) => (a, commands::match_trials),
        Command::Report(a) => (a, commands::report),
    };
    let cfg = load_config(args)?;
    let settings = Settings::resolve(&cfg)?;
    cmd(&cfg, &settings)
}

/// Process exit status for an error: 1 configuration, 2 data, 3 numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Numerical(_) | Error::Tensor(_) => 3,
        _ => 2,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        1 => "config",
        3 => "numerical",
        _ => "data",
    }
}
