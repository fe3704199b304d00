//! Command-line front end for `psman-core`: CSV ingestion, configuration,
//! the experiment commands, and result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use clap::Parser;

pub use config::Cli;
pub use error::{CliError, CliResult, IngestError};

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
