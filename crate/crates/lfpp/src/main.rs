use std::process::ExitCode;

use clap::Parser;
use lfpp::cli::{run_config, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.to_config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_config(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
