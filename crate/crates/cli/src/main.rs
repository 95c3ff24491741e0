//! `acl`: sketch datasets, learn mixtures from sketches, score models,
//! verify the periodic-feature constants and run experiment sweeps.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] acl_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(acl_core::Error::Numerical(_)) => 4,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sketch(args) => commands::sketch(args),
        Command::Learn(args) => commands::learn(args),
        Command::Eval(args) => commands::eval(args),
        Command::Verify(args) => commands::verify(args),
        Command::Experiment(args) => commands::experiment(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
