use std::process::ExitCode;

use clap::Parser;
use msk_tap::{configure_threads, emit, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(cli.threads)
        .and_then(|()| run(&cli))
        .and_then(|r| emit(&cli, &r));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
