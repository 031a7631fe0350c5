//! The `vora-filter` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod args;
mod commands;

use std::ffi::OsString;

use clap::Parser;

pub use args::{
    load_config, parse_config, Cli, Command, CommandKind, CorrectionArg, Method, RunArgs, Settings,
    DEFAULT_DENSE_ITERS, DEFAULT_STRIDE,
};
pub use commands::{run, RunManifest, MANIFEST_FILE};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if err.is_data() || matches!(err, Error::InvalidFilter { .. }) {
        EXIT_DATA
    } else {
        EXIT_USAGE
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
