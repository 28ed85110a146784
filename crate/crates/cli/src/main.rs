use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use noisytrack_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.stdout.as_bytes());
            let _ = out.flush();
            ExitCode::from(outcome.code)
        }
        Err(failure) => {
            eprintln!("noisytrack: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
