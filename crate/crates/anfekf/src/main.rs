use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = anfekf::cli::Cli::parse();
    match anfekf::cli::execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
