//! `dragforge`: one binary exposing the dataset pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 provider or
//! remote error. Logs go to standard error; data goes to files or standard
//! output. Output files are written atomically, so a failing invocation
//! never leaves partial outputs behind.

mod commands;
mod error;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Command;

#[derive(Parser)]
#[command(
    name = "dragforge",
    version,
    about = "Dictionary- and retrieval-augmented MT dataset pipeline",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = commands::run(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
