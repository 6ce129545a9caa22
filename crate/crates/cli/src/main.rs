//! `tastediv`: the analysis pipeline as composable subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{LevelChoice, Overrides, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad configuration or missing inputs.
    Usage(String),
    Compute(String),
}

impl From<tastediv_core::Error> for CliError {
    fn from(e: tastediv_core::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "tastediv", version, about = "Musical taste diversity pipeline")]
struct Cli {
    /// Flat key-value TOML file with input paths and thresholds.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(["genre", "subgenre", "both"]))]
    level: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    min_plays: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Category distances and per-user diversity scores.
    Diversity,
    /// Two-dimensional map of the category distances (mds.csv, mds.svg).
    Map,
    /// Home ZIP inference from geotagged pings.
    Homeloc,
    /// Joins scores, census, profile and interest data into features.csv.
    Features,
    /// Imputes, standardizes and fits one model per diversity level.
    Regress,
    /// Rater agreement and rater-versus-score correlations.
    Agreement,
    /// Every step in order.
    All,
}

impl Command {
    fn steps(self) -> Vec<&'static str> {
        match self {
            Command::Diversity => vec!["diversity"],
            Command::Map => vec!["map"],
            Command::Homeloc => vec!["homeloc"],
            Command::Features => vec!["features"],
            Command::Regress => vec!["regress"],
            Command::Agreement => vec!["agreement"],
            Command::All => commands::ALL_STEPS.to_vec(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        out: cli.out,
        level: cli
            .level
            .map(|l| l.parse::<LevelChoice>())
            .transpose()
            .map_err(CliError::Usage)?,
        seed: cli.seed,
        top_k: cli.top_k,
        min_plays: cli.min_plays,
    };
    let cfg = PipelineConfig::load(cli.config.as_deref(), overrides)?;
    let steps = cli.command.steps();
    for step in &steps {
        for input in commands::inputs_for(step, &cfg) {
            cfg.require(input)?;
        }
    }
    for step in steps {
        for path in commands::run_step(step, &cfg)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("tastediv: {msg}");
            eprintln!("usage: tastediv [--config <path>] [--out <dir>] <command>; see --help");
            ExitCode::from(2)
        }
        Err(CliError::Compute(msg)) => {
            eprintln!("tastediv: error: {msg}");
            ExitCode::from(1)
        }
    }
}
