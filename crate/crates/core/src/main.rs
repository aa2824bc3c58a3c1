use std::process::ExitCode;

use clap::Parser;
use rtwl::cli::{render, run, Cli};
use rtwl::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                Error::InvalidArgument(_) | Error::Budget { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            };
        }
    };
    let text = render(&report, cli.format);
    match &cli.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
