use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match qvk::cli::Cli::try_parse() {
        Ok(cli) => qvk::run(cli),
        Err(e) => {
            let _ = e.print();
            // --help and --version go to stdout and are not failures.
            ExitCode::from(if e.use_stderr() { 2 } else { 0 })
        }
    }
}
