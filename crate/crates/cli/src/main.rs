use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = crl_cli::Cli::parse();
    match crl_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
