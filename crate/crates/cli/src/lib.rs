//! The `bombus` pipeline: simulate a reference table, calibrate observed
//! data, run simulation studies, predict and report.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or unreadable configuration (exit code 1).
    Config(String),
    /// Anything failing while running (exit code 2).
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bombus_core::Error> for CliError {
    fn from(e: bombus_core::Error) -> Self {
        match e {
            bombus_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Some method or parameter was flagged as failed (exit code 3).
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bombus", version, about = "ABC calibration of a bumble-bee foraging model")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Keep valid rows of an existing table and simulate only the rest.
    #[arg(long, global = true)]
    pub resume: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the reference table.
    Simulate,
    /// Calibrate an observed dataset against the table.
    Calibrate {
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Use table rows as pseudo-observations and score every method.
    Simstudy {
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Predicted intensity maps and posterior-predictive datasets.
    Predict {
        /// Posterior CSV of one method.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long)]
        observed: Option<PathBuf>,
    },
    /// Consolidate a run directory into a markdown summary.
    Report {
        /// Run directory; defaults to the configured output.
        dir: Option<PathBuf>,
    },
}

/// Loads the configuration, applies overrides and runs the command inside a
/// pool of the requested size.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg, cli.resume),
        Command::Calibrate { observed, table } => commands::calibrate(&cfg, observed, table),
        Command::Simstudy { table } => commands::simstudy(&cfg, table),
        Command::Predict { result, observed } => commands::predict(&cfg, result, observed),
        Command::Report { dir } => commands::report(&cfg, dir),
    })
}
