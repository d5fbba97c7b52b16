//! Command line front end for `repeller-core`.
//!
//! Every subcommand reads a [`config::RunConfig`], runs one computation and
//! writes a single JSON or CSV document. Results go to `--out` (written
//! atomically) or stdout; progress and errors go to stderr.

use std::fmt;
use std::path::{Path, PathBuf};

pub mod config;
pub mod report;

pub use config::{Format, RunConfig};

/// Bumped whenever a JSON key or CSV column changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Pressure,
    Dimension,
    RandomDim,
    Sweep,
    Boxdim,
    Components,
    Diagnose,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::Dimension => "dimension",
            Command::RandomDim => "random-dim",
            Command::Sweep => "sweep",
            Command::Boxdim => "boxdim",
            Command::Components => "components",
            Command::Diagnose => "diagnose",
        }
    }

    pub fn default_format(&self) -> Format {
        match self {
            Command::RandomDim | Command::Sweep | Command::Boxdim => Format::Csv,
            _ => Format::Json,
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Bad or inconsistent configuration; exit status 2.
    Config(String),
    /// The computation itself failed; exit status 3.
    Numeric(repeller_core::Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(msg) => write!(f, "ConfigError: {msg}"),
            RunError::Numeric(e) => write!(f, "{}: {e}", e.name()),
            RunError::Io(msg) => write!(f, "IoError: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<repeller_core::Error> for RunError {
    fn from(e: repeller_core::Error) -> Self {
        match e {
            repeller_core::Error::InvalidInput(msg) => RunError::Config(msg.to_string()),
            other => RunError::Numeric(other),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

/// Loads the config (or defaults), runs `command` and writes the result.
pub fn run(command: Command, config_path: Option<&Path>, overrides: &Overrides) -> Result<(), RunError> {
    let mut cfg = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(sub) = &cfg.subcommand {
        if sub != command.name() {
            return Err(RunError::Config(format!("config is for {sub:?}, not {:?}", command.name())));
        }
    }
    if let Some(seed) = overrides.seed {
        cfg.ensemble.get_or_insert_with(Default::default).seed = seed;
    }
    let format = overrides.format.or(cfg.output.format).unwrap_or(command.default_format());
    let target = overrides.out.clone().or_else(|| cfg.output.path.clone());

    let result = report::execute(command, &cfg)?;
    let text = report::render(command, &cfg, &result, format)?;
    match target {
        Some(path) => report::write_atomic(&path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
