//! `mlab`: batch front-end for Markov factors, Remez ratios, witness ratios
//! and exponent fits on cuspidal domains.
//!
//! Exit codes: 0 success, 2 config or I/O error, 3 domain hypothesis
//! failure, 4 numerical or conditioning failure, 5 insufficient data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "mlab",
    version,
    about = "Markov-type inequalities on cuspidal planar domains"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Search seed; overrides `compute.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for per-degree work.
    #[arg(long, global = true, value_name = "N", env = "MLAB_THREADS")]
    threads: Option<usize>,

    /// Fit window `A:B` over degrees.
    #[arg(long, global = true, value_name = "A:B", value_parser = parse_window)]
    window: Option<(usize, usize)>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the domain hypotheses and predict the Markov exponent.
    Check,
    /// Markov factor series and its fitted exponent.
    Markov,
    /// Normalized ratios of the Jacobi witness polynomials.
    Witness,
    /// Remez ratios over the truncations `K_{1/n^2}` (or a fixed `x_lo`).
    Remez,
    /// Fit `ln value` against `ln n` from a factor CSV.
    Fit {
        /// CSV with an `n` column and a `factor`, `ratio` or `rho` column.
        csv: PathBuf,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected A:B, got \"{s}\""))?;
    let a: usize = a.trim().parse().map_err(|e| format!("window start: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("window end: {e}"))?;
    if a > b {
        return Err(format!("window start {a} exceeds end {b}"));
    }
    Ok((a, b))
}

fn load_config(path: &Option<PathBuf>) -> CliResult<RunConfig> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required for this command".into()))?;
    RunConfig::load(path)
}

fn run(cli: Cli) -> CliResult<i32> {
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads: must be at least 1".into()));
    }
    let ov = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        window: cli.window,
    };
    match &cli.command {
        Command::Check => commands::cmd_check(&load_config(&cli.config)?, &ov),
        Command::Markov => commands::cmd_markov(&load_config(&cli.config)?, &ov),
        Command::Witness => commands::cmd_witness(&load_config(&cli.config)?, &ov),
        Command::Remez => commands::cmd_remez(&load_config(&cli.config)?, &ov),
        Command::Fit { csv } => {
            let default_out = csv.parent().map(PathBuf::from).unwrap_or_default();
            commands::cmd_fit(csv, &ov, &default_out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
