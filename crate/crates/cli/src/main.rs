//! `ergoscene`: corpus preparation, training, generation, scoring, ablations
//! and rendering. Every command writes its outputs and a `manifest.json`
//! into its output directory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! generation error, 3 training divergence.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
                CliError::Divergence(_) => 3,
            })
        }
    }
}
