//! `mlvat` command-line interface.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for data errors.
//! Failures print `ERR:<code>: <message>` to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mlvat", version, about = "Multilabel virtual adversarial training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one head and print its result record.
    Train(TrainArgs),
    /// Run a grid of configurations.
    Sweep(SweepArgs),
    /// Per-layer and cumulative-layer probing with the expected layer.
    Probe(ProbeArgs),
    /// Write a synthetic dataset and embedding store.
    GenSynth(GenSynthArgs),
    /// Print the header of an embedding store.
    InspectStore(InspectArgs),
    /// Aggregate result records over seeds.
    Report(ReportArgs),
}

/// Options shared by everything that trains.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Directory with `<language>.<split>.tsv` files and `embeddings.mlve`
    /// [default: $MLVAT_DATA_DIR]
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// `key = value` run config applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sup | mlvat
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// mse_sigmoid | mse_logits | kl_per_label
    #[arg(long)]
    divergence: Option<String>,
    #[arg(long)]
    power_iters: Option<String>,
    #[arg(long)]
    labeled_batch: Option<String>,
    #[arg(long)]
    unlabeled_batch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Draw labeled examples from train and dev.
    #[arg(long)]
    train_plus_dev: bool,
    /// dev | test
    #[arg(long)]
    eval_split: Option<String>,
    #[arg(long)]
    eval_language: Option<String>,
    /// all | none | comma-separated languages
    #[arg(long)]
    unlabeled_sources: Option<String>,
    /// last | mean | mean:<max> | <index>
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Append the result record to this JSON-lines file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the trained parameters (MLVP format).
    #[arg(long)]
    save_params: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    rhos: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    divergences: Vec<String>,
    /// Unlabeled rows per step as multiples of the labeled batch.
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Grid cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON-lines output, one record per cell.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV summary, one row per cell.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the layer CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Use the standard benchmark spec; only --seed applies.
    #[arg(long)]
    benchmark: bool,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    labels: usize,
    #[arg(long, default_value_t = 250)]
    per_cluster: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 1)]
    domains: usize,
    #[arg(long, default_value_t = 0.0)]
    domain_shift: f64,
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InspectArgs {
    path: PathBuf,
    /// Number of ids to list.
    #[arg(long, default_value_t = 5)]
    head: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// JSON-lines result files.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Also write the aggregate as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Probe(a) => commands::probe(a),
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::InspectStore(a) => commands::inspect_store(a),
        Command::Report(a) => commands::report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERR:{}: {e}", e.code());
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
