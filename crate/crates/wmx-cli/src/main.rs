//! `wmx`: batch driver for the world-model explainability toolkit.

mod cmd;
mod codec;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser};

use crate::error::CliError;

const THREADS_VAR: &str = "WMX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wmx", version, about = "Explainability tools for VAE-LSTM world models")]
pub struct Cli {
    /// JSON config file; flags given on the command line override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: cmd::Command,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let result = init_threads().and_then(|()| cmd::dispatch(cli.command, cli.config.as_deref(), &matches));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nFor usage, run `wmx --help`.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
