//! Binary entry point: parse, dispatch, map failures to exit codes.

use clap::Parser;
use cramnet_cli::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli.cmd) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
