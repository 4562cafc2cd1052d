//! `afcs`: design sheets, preset runs and forced over-modulation experiments
//! for the adaptive feedback communication system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod svg;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use afcs::simulation::DEFAULT_SEED;
use commands::RunOptions;
use config::Config;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "afcs", version, about = "Adaptive feedback communication system: theory and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file of `key = value` lines applied on top of the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed of every Monte Carlo stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Monte Carlo samples per point (forced-corruption trials for appendix-a).
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "afcs-out")]
    out: PathBuf,

    /// Comma-separated output formats: csv, svg.
    #[arg(long, global = true, default_value = "csv")]
    format: String,

    /// Worker threads for Monte Carlo batches (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the design sheet of a preset or of a custom configuration.
    Design {
        #[arg(default_value = "custom")]
        preset: String,
    },
    /// Run a preset (or `custom`) and write theory and empirical tables.
    Run { preset: String },
    /// Forced over-modulation experiments.
    AppendixA,
    /// List the built-in presets.
    ListPresets,
}

fn parse_formats(spec: &str) -> Result<(bool, bool), CliError> {
    let mut csv = false;
    let mut svg = false;
    for f in spec.split(',').map(str::trim) {
        match f.to_ascii_lowercase().as_str() {
            "csv" => csv = true,
            "svg" => svg = true,
            other => return Err(CliError::Usage(format!("unknown output format `{other}` (expected csv or svg)"))),
        }
    }
    Ok((csv, svg))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref().map(Config::load).transpose()?;
    let (csv, svg) = parse_formats(&cli.format)?;
    if cli.samples == Some(0) {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let opts = RunOptions {
        seed: cli.seed,
        samples: cli.samples,
        out: cli.out.clone(),
        csv,
        svg,
    };
    match &cli.command {
        Command::ListPresets => print!("{}", commands::list_presets()),
        Command::Design { preset } => {
            let preset = commands::load_preset(preset, config.as_ref())?;
            let (sheet, warnings) = commands::design(&preset)?;
            print!("{sheet}");
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Run { preset } => {
            let preset = commands::load_preset(preset, config.as_ref())?;
            for path in commands::run(&preset, &opts)? {
                println!("wrote {}", path.display());
            }
        }
        Command::AppendixA => {
            let preset = commands::load_preset("appendixA", config.as_ref())?;
            for path in commands::appendix(&preset, &opts, &preset.name)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} worker threads: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("afcs: {e}");
            e.exit_code()
        }
    }
}
