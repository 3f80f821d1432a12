//! `eve`: build SNLI-VE, generate the synthetic task, train, evaluate and
//! report.
//!
//! Exit status is 0 on success, 1 for invalid input or configuration
//! (including usage errors), 2 when a run fails.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "eve", version, about = "Visual entailment: datasets, models, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build SNLI-VE splits from SNLI files and image split lists.
    BuildDataset(BuildArgs),
    /// Per-split statistics of dataset files.
    Stats(StatsArgs),
    /// Generate the synthetic grounded task.
    Synth(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one dataset file.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Aggregate evaluation records into a results table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// SNLI jsonl files.
    #[arg(long, required = true, num_args = 1..)]
    snli: Vec<std::path::PathBuf>,
    #[arg(long)]
    train_images: std::path::PathBuf,
    #[arg(long)]
    val_images: std::path::PathBuf,
    #[arg(long)]
    test_images: std::path::PathBuf,
    /// Output directory for train/val/test.jsonl, stats.json and build_report.json.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Abort on the first malformed SNLI line instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Dataset files; each file stem names a split.
    #[arg(required = true)]
    files: Vec<std::path::PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: std::path::PathBuf,
    /// Synthetic grammar settings as JSON.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training configuration as JSON; flags below override its fields.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    train: Option<std::path::PathBuf>,
    #[arg(long)]
    val: Option<std::path::PathBuf>,
    #[arg(long)]
    features: Option<std::path::PathBuf>,
    #[arg(long)]
    embeddings: Option<std::path::PathBuf>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    output: Option<std::path::PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the learning rate fixed.
    #[arg(long)]
    no_plateau: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: std::path::PathBuf,
    #[arg(long)]
    data: std::path::PathBuf,
    #[arg(long)]
    features: Option<std::path::PathBuf>,
    /// Split name recorded in the output; defaults to the data file stem.
    #[arg(long)]
    split: Option<String>,
    /// Model name recorded in the output; defaults to the variant's name.
    #[arg(long)]
    name: Option<String>,
    /// Where to write the evaluation record as JSON.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation records written by `eve eval`.
    #[arg(required = true)]
    records: Vec<std::path::PathBuf>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::BuildDataset(a) => commands::build_dataset(a),
        Command::Stats(a) => commands::stats(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(if failure.validation { 1 } else { 2 })
        }
    }
}
