use clap::Parser;

use gapcert::cli::{exit_code, run, Cli};

fn main() {
    let result = run(Cli::parse());
    if let Err(e) = &result {
        eprintln!("gapcert: {e}");
    }
    std::process::exit(exit_code(&result));
}
