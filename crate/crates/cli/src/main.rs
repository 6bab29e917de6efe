use std::process::ExitCode;

use clap::Parser;

use sheetqv_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (code, message) = run(cli);
    if let Some(message) = message {
        eprintln!("error: {message}");
    }
    ExitCode::from(code)
}
