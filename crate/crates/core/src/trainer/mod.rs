//! Supervised and semi-supervised training runs, evaluation and grids.

mod benchmark;
mod config;
mod run;
mod sweep;

pub use benchmark::{
    benchmark_config, benchmark_corpus, benchmark_spec, mean_jaccard, run_benchmark, BENCHMARK_SEEDS,
};
pub use config::{RunConfig, TrainMode, UnlabeledSources};
pub use run::{
    evaluate, evaluate_features, features_and_labels, run, train_mlvat, train_prepared, train_supervised, RunResult,
    TrainData,
};
pub use sweep::{csv_row, run_sweep, summarize, sweep_csv, GroupSummary, SweepAxes, SWEEP_CSV_HEADER};
