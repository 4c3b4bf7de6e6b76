//! `wermlab`: run weighted-ERM experiments from JSON configs.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a run fails.

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "wermlab", version, about = "Weighted ERM experiments: data, fits, selective risk and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). Optional for `report`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per CPU. Falls back to WERMLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Draw a dataset and write dataset.csv.
    Gen,
    /// Run the two-step fit and write model.json and provenance.json.
    Fit,
    /// Selective risk over coverage levels and seeds.
    Sweep,
    /// Bernstein-condition probes.
    Bernstein,
    /// Excess-risk decay over sample sizes.
    Rates,
    /// ERM versus weighted ERM on the large-margin region.
    Lowerbound,
    /// Regenerate charts from existing CSVs.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Fit => "fit",
            Command::Sweep => "sweep",
            Command::Bernstein => "bernstein",
            Command::Rates => "rates",
            Command::Lowerbound => "lowerbound",
            Command::Report => "report",
        }
    }
}

fn threads(cli: &Cli) -> Result<usize, CliError> {
    if let Some(t) = cli.threads {
        return Ok(t);
    }
    match std::env::var("WERMLAB_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Validation(format!("WERMLAB_THREADS='{v}' is not a count"))),
        Err(_) => Ok(0),
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.command != cli.command.name() {
        return Err(CliError::Validation(format!(
            "{}: config is for '{}' but '{}' was requested",
            path.display(),
            cfg.command,
            cli.command.name()
        )));
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    Ok(Some(cfg))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    wermlab::exec::configure_threads(threads(cli)?);
    let cfg = load_config(cli)?;
    if cli.command == Command::Report {
        let dir = cli
            .out
            .clone()
            .or_else(|| cfg.as_ref().and_then(|c| c.output_dir.clone()))
            .ok_or_else(|| CliError::Validation("report needs --out or a config with output_dir".into()))?;
        return commands::report(&dir);
    }
    let cfg = cfg.ok_or_else(|| CliError::Validation(format!("{} needs --config", cli.command.name())))?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Sweep => commands::run_sweep(&cfg),
        Command::Bernstein => commands::bernstein(&cfg),
        Command::Rates => commands::rates(&cfg),
        Command::Lowerbound => commands::lowerbound(&cfg),
        Command::Report => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wermlab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
