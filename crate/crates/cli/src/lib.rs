//! Command-line front end: configuration, the experiment commands and the
//! acceptance runner.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use mwcb_core::LabError;
use serde_json::{json, Value};

use config::{Cli, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Resource(String),
    Lab(LabError),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "configuration error: {s}"),
            CliError::Resource(s) => write!(f, "resource limit: {s}"),
            CliError::Lab(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        CliError::Lab(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Lab(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Resource(_) | CliError::Io(_) => EXIT_RESOURCE,
            CliError::Lab(e) => match e {
                LabError::Config(_) | LabError::Domain(_) | LabError::Range(_) | LabError::Parse(_) => EXIT_CONFIG,
                LabError::Resource(_) | LabError::Io(_) | LabError::Csv(_) => EXIT_RESOURCE,
                _ => EXIT_FAILED,
            },
        }
    }
}

/// What a command hands back: whether its checks held and the results
/// block of the summary.
pub struct Report {
    pub passed: bool,
    pub results: Value,
}

/// The summary document written next to every command's output.
pub fn summary(cfg: &ExperimentConfig, report: &Report, files: &[String]) -> Value {
    json!({
        "tool": "mwcb",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "config": cfg,
        "passed": report.passed,
        "results": report.results,
        "files": files,
    })
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("LAB_THREADS must be a positive integer, got `{v}`")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = configure_threads()
        .and_then(|_| ExperimentConfig::resolve(&cli))
        .and_then(|cfg| commands::run(&cfg).map(|passed| (cfg, passed)));
    match outcome {
        Ok((_, true)) => EXIT_OK,
        Ok((cfg, false)) => {
            eprintln!("mwcb {}: checks failed (see the summary in {})", cfg.command.name(), cfg.out.display());
            EXIT_FAILED
        }
        Err(e) => {
            eprintln!("mwcb: {e}");
            e.exit_code()
        }
    }
}
