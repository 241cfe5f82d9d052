//! `devolve <command> --config run.json [--set key=value]... [--workers N]`
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<devolve_core::Error> for CliError {
    fn from(e: devolve_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "devolve", version, about = "Sparsify, quantize and pack small neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `de.trials_per_cycle=1000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Trial-evaluation workers (overrides de.workers).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher from scratch.
    Train(Common),
    /// Evolve a sparse student from the teacher.
    Sparsify(Common),
    /// Quantize the student's surviving weights.
    Quantize(Common),
    /// Entropy-code the quantized model into a packed file.
    Pack(Common),
    /// Restore a dense model from the packed file.
    Unpack(Common),
    /// Accuracy and teacher divergence of a model file.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model file (DEVN, DEVP or DEVQ); defaults to the student.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Reference model; defaults to the configured teacher.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Summarise a DE history CSV.
    Report {
        /// History CSV; defaults to the one named in --config.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let load = |c: &Common| config::load(&c.config, &c.sets, c.workers);
    match cli.command {
        Command::Train(c) => commands::train(&load(&c)?),
        Command::Sparsify(c) => commands::sparsify(&load(&c)?),
        Command::Quantize(c) => commands::quantize(&load(&c)?),
        Command::Pack(c) => commands::pack(&load(&c)?),
        Command::Unpack(c) => commands::unpack(&load(&c)?),
        Command::Eval { common, model, teacher } => commands::eval(&load(&common)?, model, teacher),
        Command::Report { history, config, sets } => {
            let path = match (history, config) {
                (Some(h), _) => h,
                (None, Some(c)) => {
                    let cfg = config::load(&c, &sets, None)?;
                    cfg.output.resolve(&cfg.output.history)
                }
                (None, None) => {
                    return Err(CliError::Validation("report needs --history or --config".into()))
                }
            };
            commands::report(&path)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
