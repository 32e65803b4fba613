use std::process::ExitCode;

use clap::Parser;
use fluxvol_cli::{init, run, Cli, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init(&cli.global) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
