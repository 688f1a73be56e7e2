//! `rankset`: simulate, evaluate and plan ranked set sampling designs.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flag combination or value detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|cause| {
        cause.is::<UsageError>()
            || matches!(
                cause.downcast_ref::<rankset::Error>(),
                Some(rankset::Error::InvalidParameter(_) | rankset::Error::Config(_) | rankset::Error::Degenerate(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.common, a),
        Command::Oracle(a) => commands::oracle(&cli.common, a),
        Command::Dataset(a) => commands::dataset(&cli.common, a),
        Command::Estimate(a) => commands::estimate(&cli.common, a),
        Command::Plan(a) => commands::plan_cmd(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
