use std::process::ExitCode;

use clap::Parser;
use proctor_cli::{run, Cli};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    // clap exits with 2 on usage errors, matching the config error class
    let cli = Cli::parse();
    match run(&cli, &argv) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("proctor {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
