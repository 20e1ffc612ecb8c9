//! Command-line front end for `pulseopt`.
//!
//! Flags, an optional key-value config file and the
//! `PULSEOPT_DEFAULT_DELTA` environment variable are merged into a
//! [`spec::RunSpec`]; [`commands::run`] turns it into a [`report::Report`]
//! that renders as an aligned table, CSV or versioned JSON.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod report;
pub mod spec;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::Parser;
use thiserror::Error;

pub use args::Cli;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{module}: {source}")]
    Compute {
        module: &'static str,
        source: pulseopt::Error,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn compute(module: &'static str, source: pulseopt::Error) -> Self {
        CliError::Compute { module, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Compute {
                source: pulseopt::Error::InvalidInput(_) | pulseopt::Error::Domain { .. },
                ..
            } => EXIT_USAGE,
            CliError::Compute { .. } | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

pub const EXIT_OK: u8 = 0;
/// A computation did not converge or a verification failed.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Parses `args`, runs the command and writes its output. Returns the exit
/// status.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            let _ = writeln!(stderr, "pulseopt: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<bool, CliError> {
    let spec = cli.resolve()?;
    let report = commands::run(&spec)?;
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    let written = match &spec.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            report.render(&spec, &mut w, &mut *stderr).and_then(|_| w.flush())
        }
        None => report.render(&spec, &mut *stdout, &mut *stderr),
    };
    match written {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(io_err(e)),
        _ => Ok(report.ok),
    }
}
