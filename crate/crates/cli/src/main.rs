// SPDX-License-Identifier: Apache-2.0

//! `epilib` command-line entry point. Logs go to standard error; data goes
//! to files or standard output. Exit status: 0 success, 1 domain error,
//! 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "epilib",
    version,
    about = "Train, sample, characterize and filter epitope libraries"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline TOML file; its stage sections supply defaults for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory (see each command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter, deduplicate and split an epitope table into a directory.
    Ingest(commands::IngestArgs),
    /// Train a language model checkpoint into a directory.
    Train(commands::TrainArgs),
    /// Sample a library of unique sequences as FASTA.
    Generate(commands::GenerateArgs),
    /// Write the positional statistics bundle for a set of sequences.
    Stats(commands::StatsArgs),
    /// Train the ensemble classifier on model embeddings.
    TrainClassifier(commands::TrainClassifierArgs),
    /// Score a classifier on a labeled dataset.
    Evaluate(commands::EvaluateArgs),
    /// Keep the library sequences a classifier calls positive.
    Filter(commands::FilterArgs),
    /// Compare the perplexity distributions of two sequence sets.
    ComparePpl(commands::ComparePplArgs),
    /// Principal components of sequence embeddings.
    Pca(commands::PcaArgs),
    /// Run pipeline stages from a config file.
    Run(commands::RunArgs),
}

pub enum Failure {
    Usage(clap::Error),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

/// Usage error attributed to `flag`, rendered with clap's usage text.
pub fn usage(msg: impl std::fmt::Display) -> Failure {
    use clap::CommandFactory;
    Failure::Usage(Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let g = &cli.global;
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Generate(a) => commands::generate(g, a),
        Command::Stats(a) => commands::stats(g, a),
        Command::TrainClassifier(a) => commands::train_classifier(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::Filter(a) => commands::filter(g, a),
        Command::ComparePpl(a) => commands::compare_ppl(g, a),
        Command::Pca(a) => commands::pca(g, a),
        Command::Run(a) => commands::run(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
