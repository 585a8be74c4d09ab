//! `phone-embed`: corpus synthesis, embedding-model training, and
//! pronunciation scoring from the command line.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage error.

mod commands;
mod run_manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "phone-embed", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize, validate, or summarize corpora.
    Corpus(commands::corpus::CorpusArgs),
    /// Train a single-view or multi-view embedding model.
    Train(commands::train::TrainArgs),
    /// Score pronunciations and evaluate metrics.
    Score(commands::score::ScoreArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Corpus(args) => commands::corpus::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
