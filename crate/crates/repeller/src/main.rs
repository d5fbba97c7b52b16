use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use repeller::{run, Command, Format, Overrides};

/// Dimension of conformal repellers and random Julia sets from the zero of
/// the pressure function.
#[derive(Debug, Parser)]
#[command(name = "repeller", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Result file, written atomically. Defaults to `[output] path`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `[ensemble] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let overrides = Overrides { out: cli.out, format: cli.format, seed: cli.seed };
    match run(cli.command, cli.config.as_deref(), &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
