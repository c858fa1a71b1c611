use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pfs_cli::config::{Format, Overrides};
use pfs_cli::Stage;
use pfs_core::threshold::ThresholdMode;

#[derive(Parser)]
#[command(name = "pfs", version, about = "Probability of food security pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for the synthetic generator
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// anchored, snap-model, p5 or p20
    #[arg(long, global = true, value_parser = parse_mode)]
    threshold_mode: Option<ThresholdMode>,

    /// Report table format: csv or json
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,

    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse and harmonize the panel; build the study sample
    Ingest,
    /// Fit the mean and variance equations and compute PFS
    Estimate,
    /// Set yearly cutoffs and classify person-years
    Calibrate,
    /// Spells, transitions, chronic insecurity and FSSS comparison
    Dynamics,
    /// Summary tables and figures
    Report,
    /// Generate a synthetic panel with known truth
    Synth,
    /// Run the oracle checks
    Validate,
}

fn parse_mode(s: &str) -> Result<ThresholdMode, String> {
    ThresholdMode::parse(s).ok_or_else(|| format!("unknown threshold mode {s:?}"))
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::parse(s).ok_or_else(|| format!("unknown format {s:?}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Estimate => Stage::Estimate,
        Command::Calibrate => Stage::Calibrate,
        Command::Dynamics => Stage::Dynamics,
        Command::Report => Stage::Report,
        Command::Synth => Stage::Synth,
        Command::Validate => Stage::Validate,
    };
    let overrides =
        Overrides { out: cli.out, seed: cli.seed, threshold_mode: cli.threshold_mode, format: cli.format };
    match pfs_cli::run(stage, cli.config.as_deref(), &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
