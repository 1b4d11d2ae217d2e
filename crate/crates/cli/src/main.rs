//! `taxo-expand`: split, train, expand, evaluate and clean taxonomies.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Data(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<taxo_expand::Error> for Failure {
    fn from(e: taxo_expand::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "taxo-expand", version, about = "Self-supervised taxonomy expansion")]
struct Cli {
    /// Worker threads for cache building, ranking and batching (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mask random leaves as validation and test queries.
    Split(commands::SplitArgs),
    /// Train a model on an existing taxonomy or a split.
    Train(commands::TrainArgs),
    /// Attach new concepts to a taxonomy.
    Expand(commands::ExpandArgs),
    /// Rank held-out queries and report metrics.
    Eval(commands::EvalArgs),
    /// Flag existing leaf edges the model finds implausible.
    Clean(commands::CleanArgs),
    /// Finite-difference check of every primitive and model variant.
    Gradcheck(commands::GradcheckArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Expand(a) => commands::expand(a),
        Command::Eval(a) => commands::eval(a),
        Command::Clean(a) => commands::clean(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("taxo-expand: {f}");
            ExitCode::from(f.code())
        }
    }
}
