use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, TrainMode};
use super::run::{run, RunResult};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::vat::DivergenceVariant;

/// Grid axes; an empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub modes: Vec<TrainMode>,
    pub rhos: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub alphas: Vec<f64>,
    pub divergences: Vec<DivergenceVariant>,
    /// Unlabeled rows per step as a multiple of the labeled batch size.
    pub ratios: Vec<usize>,
    pub seeds: Vec<u64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl SweepAxes {
    /// Cartesian product in a fixed order (seed varies fastest).
    pub fn cells(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for mode in axis(&self.modes, base.mode) {
            for rho in axis(&self.rhos, base.rho) {
                for eps in axis(&self.epsilons, base.epsilon) {
                    for alpha in axis(&self.alphas, base.alpha) {
                        for div in axis(&self.divergences, base.divergence) {
                            for ratio in axis(&self.ratios, usize::MAX) {
                                for seed in axis(&self.seeds, base.seed) {
                                    let mut c = base.clone();
                                    c.mode = mode;
                                    c.rho = rho;
                                    c.epsilon = eps;
                                    c.alpha = alpha;
                                    c.divergence = div;
                                    if ratio != usize::MAX {
                                        c.unlabeled_batch = ratio * c.labeled_batch;
                                    }
                                    c.seed = seed;
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every cell, at most `jobs` at a time. Results keep cell order.
pub fn run_sweep(cells: &[RunConfig], corpus: &Corpus, jobs: usize) -> Result<Vec<RunResult>> {
    if jobs <= 1 {
        return cells.iter().map(|c| run(c, corpus)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(|c| run(c, corpus)).collect())
}

pub const SWEEP_CSV_HEADER: &str =
    "mode,target,eval_language,rho,epsilon,alpha,divergence,unlabeled_batch,seed,ji,mif1,maf1,final_loss";

pub fn csv_row(r: &RunResult) -> String {
    let c = &r.config;
    format!(
        "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        c.mode,
        c.target,
        c.eval_language(),
        c.rho,
        c.epsilon,
        c.alpha,
        c.divergence,
        c.unlabeled_batch,
        c.seed,
        r.report.jaccard,
        r.report.micro_f1,
        r.report.macro_f1,
        r.epoch_losses.last().copied().unwrap_or(f64::NAN),
    )
}

pub fn sweep_csv(results: &[RunResult]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(out, "{}", csv_row(r));
    }
    out
}

/// Seed-aggregated scores of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub key: String,
    pub n: usize,
    pub mean_ji: f64,
    pub std_ji: f64,
    pub mean_mif1: f64,
    pub mean_maf1: f64,
}

fn group_key(c: &RunConfig) -> String {
    format!(
        "{} {}->{} rho={} eps={} alpha={} {} u={}",
        c.mode,
        c.target,
        c.eval_language(),
        c.rho,
        c.epsilon,
        c.alpha,
        c.divergence,
        c.unlabeled_batch
    )
}

/// Groups results that differ only in seed, in first-seen order. The
/// standard deviation is the sample one (zero for a single seed).
pub fn summarize(results: &[RunResult]) -> Vec<GroupSummary> {
    let mut groups: Vec<(String, Vec<&RunResult>)> = Vec::new();
    for r in results {
        let key = group_key(&r.config);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(key, rs)| {
            let n = rs.len();
            let mean = |f: &dyn Fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            let mean_ji = mean(&|r| r.report.jaccard);
            let var = if n > 1 {
                rs.iter().map(|r| (r.report.jaccard - mean_ji).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            GroupSummary {
                key,
                n,
                mean_ji,
                std_ji: var.sqrt(),
                mean_mif1: mean(&|r| r.report.micro_f1),
                mean_maf1: mean(&|r| r.report.macro_f1),
            }
        })
        .collect()
}
