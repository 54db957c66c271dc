//! `mkssl`: fit and score cross-view re-identification projections.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap sends --help/--version to stdout (success) and usage
            // errors to stderr.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for bad parameters, 3 for numerical failures, 2 for everything else
/// (i/o, malformed files, broken invariants).
fn exit_code(err: &mkssl_core::Error) -> u8 {
    if err.is_numerical() {
        3
    } else if matches!(err, mkssl_core::Error::Param(_)) {
        1
    } else {
        2
    }
}
