use std::process::ExitCode;

use clap::Parser;
use tbfusion::cli::{run, Cli, EXIT_OK, EXIT_VALIDATION};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(run(&cli)),
        Err(e) => {
            let _ = e.print();
            ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK })
        }
    }
}
