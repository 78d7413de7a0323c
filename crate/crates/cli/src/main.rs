use std::process::ExitCode;

use bayes_arena_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    // usage errors exit with 2 inside parse
    let cli = Cli::parse();
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
