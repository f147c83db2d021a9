use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = solarsched::cli::Cli::parse();
    match solarsched::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
