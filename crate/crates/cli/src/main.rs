mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Mode;
use crate::error::CliError;

/// Thin-film Stokes flow with power-law slip: full-order and limit solvers.
#[derive(Debug, Parser)]
#[command(name = "thinslip", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set physics.gamma=-1`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for concurrent solves.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (takes precedence over `output_dir`).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the mode named in the config.
    Run,
    LimitSolve,
    FullSolve,
    Profile,
    Sweep,
    VerifyEstimates,
    Compare,
    Classify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config {
        field: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let mut cfg = config::load(path, &cli.overrides)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let mode = match cli.command {
        Command::Run => cfg.mode.ok_or_else(|| CliError::Config {
            field: "mode".into(),
            message: "`run` needs a mode in the config".into(),
        })?,
        Command::LimitSolve => Mode::Limit,
        Command::FullSolve => Mode::Full,
        Command::Profile => Mode::Profile,
        Command::Sweep => Mode::Sweep,
        Command::VerifyEstimates => Mode::Verify,
        Command::Compare => Mode::Compare,
        Command::Classify => Mode::Classify,
    };
    commands::execute(mode, &cfg, cli.output.as_deref())
}
