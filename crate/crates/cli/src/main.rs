use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = aat_cli::Cli::parse();
    match aat_cli::run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
