use std::process::ExitCode;

use clap::Parser;

use bookend::cli::{args::Cli, run, EXIT_ERROR};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = cli.into_config().and_then(|cfg| run(&cfg));
    match outcome {
        Ok(outcome) => {
            print!("{}", outcome.text);
            for path in &outcome.artifacts {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
