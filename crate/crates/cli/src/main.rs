use std::process::ExitCode;

use clap::Parser;
use streid_cli::Cli;

fn main() -> ExitCode {
    match streid_cli::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
