//! `gammasort` — operator command line for the sorting-line engine.
//!
//! Five subcommands tie the pipeline together: `validate` checks a
//! network file, `infer` prints posteriors, `compile` writes the runtime
//! model and divert rule, `simulate` scores controllers on staged
//! batches, and `report` emits plot-ready CSVs.
//!
//! Exit codes: 0 success, 1 domain failure (validation violations,
//! inconsistent evidence, stale or oversized models), 2 I/O or usage.
//! Every command is deterministic given the config and seed: reruns
//! produce byte-identical files and stdout.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gammasort_core::EngineError;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "gammasort",
    version,
    about = "Soil-sorting line engine: exact mixtures, compiled divert rules, line simulation"
)]
struct Cli {
    /// Run configuration JSON (see fixtures/run.json for the shape).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the network file; exit 0 iff it passes every invariant.
    Validate,
    /// Print discrete posteriors and continuous mixtures under the evidence.
    Infer,
    /// Compile the runtime model and divert rule, write JSON + PLC CSV.
    Compile,
    /// Stage seeded batches and score Bayesian/naive/oracle controllers.
    Simulate,
    /// Emit plot-ready CSVs (mixture ellipses, decision curve).
    Report,
}

/// Error carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }
    /// Domain failure: the inputs parsed but the engine rejected them.
    pub fn domain(message: impl Into<String>) -> CliError {
        CliError::new(1, message)
    }
    /// I/O failure: missing or unreadable file.
    pub fn io(message: impl Into<String>) -> CliError {
        CliError::new(2, message)
    }
    /// Usage failure: bad flags or config fields.
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError::new(2, message)
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> CliError {
        let code = match e {
            EngineError::Io(_) | EngineError::Serde(_) => 2,
            _ => 1,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::io(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::usage("--config PATH is required"))?;
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Infer => commands::infer(&cfg),
        Command::Compile => commands::compile(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Report => commands::report(&cfg),
    }
}
