//! `fairghdc` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 data error
//! (unreadable or inconsistent inputs, model/dataset mismatch). Metrics go
//! to stdout; progress and errors go to stderr.

mod commands;
mod config;
mod manifest;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchCmd, EncodeCmd, EvalCmd, SweepCmd, SynthCmd, TrainCmd};
use config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "fairghdc", version, about = "Fairness-aware graph hyperdimensional computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with defaults for any long flag (flags take precedence).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for encoding (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded two-group synthetic graph.
    Synth(SynthCmd),
    /// Encode node hypervectors and cache them.
    Encode(EncodeCmd),
    /// Train a class model and write it with per-batch traces.
    Train(TrainCmd),
    /// Score a trained model on a dataset split.
    Eval(EvalCmd),
    /// Train and evaluate over an (alpha, beta, seed) grid; resumable.
    Sweep(SweepCmd),
    /// Time each pipeline phase over synthetic graph sizes.
    Bench(BenchCmd),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(fairghdc::Error),
    Io(PathBuf, std::io::Error),
}

impl From<fairghdc::Error> for CliError {
    fn from(e: fairghdc::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_usage_error() => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(_) | CliError::Io(..) => 1,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "i/o error on {}: {e}", path.display()),
        }
    }
}

pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn info(&self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    pub fn warn(&self, msg: impl Display) {
        eprintln!("warning: {msg}");
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::Synth(c) => commands::synth(c, &file, &log),
        Command::Encode(c) => commands::encode(c, &file, &log),
        Command::Train(c) => commands::train(c, &file, &log),
        Command::Eval(c) => commands::evaluate(c, &file, &log),
        Command::Sweep(c) => commands::sweep(c, &file, &log),
        Command::Bench(c) => commands::bench(c, &file, &log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
