//! Layer-wise probing: a fresh head per layer, a fresh head per cumulative
//! layer mean, and the expected layer `E = sum(l * d_l) / sum(d_l)` over the
//! Jaccard gains `d_l` from adding layer `l`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Corpus, LayerSelection};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::trainer::{run, RunConfig};

/// Expected layer over `deltas[i]` for layer `i + 1`.
///
/// Negative deltas are used as they are, which can move the result outside
/// `[1, L]`.
pub fn expected_layer(deltas: &[f64]) -> Result<f64> {
    let total: f64 = deltas.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    let weighted: f64 = deltas.iter().enumerate().map(|(i, d)| (i + 1) as f64 * d).sum();
    Ok(weighted / total)
}

fn check_layer(corpus: &Corpus, layer: usize) -> Result<()> {
    let n_layers = corpus.store.n_layers();
    if layer >= n_layers {
        return Err(Error::LayerOutOfRange { layer, n_layers });
    }
    Ok(())
}

/// Trains `cfg` on the vectors of one layer.
pub fn layer_eval(corpus: &Corpus, layer: usize, cfg: &RunConfig) -> Result<MetricReport> {
    check_layer(corpus, layer)?;
    let cfg = RunConfig {
        layer: LayerSelection::Single(layer),
        ..cfg.clone()
    };
    Ok(run(&cfg, corpus)?.report)
}

/// Trains `cfg` on the mean of layers `0..=max_layer`.
pub fn cumulative_layer_eval(corpus: &Corpus, max_layer: usize, cfg: &RunConfig) -> Result<MetricReport> {
    check_layer(corpus, max_layer)?;
    let cfg = RunConfig {
        layer: LayerSelection::MeanUpTo(max_layer),
        ..cfg.clone()
    };
    Ok(run(&cfg, corpus)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEvalReport {
    pub per_layer: Vec<(usize, MetricReport)>,
    pub cumulative: Vec<(usize, MetricReport)>,
    /// Jaccard gain of each cumulative step, for layers `1..n_layers`.
    pub deltas: Vec<f64>,
    /// `None` when the gains sum to zero.
    pub expected_layer: Option<f64>,
    pub has_negative_delta: bool,
}

impl LayerEvalReport {
    pub fn from_reports(per_layer: Vec<(usize, MetricReport)>, cumulative: Vec<(usize, MetricReport)>) -> Self {
        let deltas: Vec<f64> = cumulative
            .windows(2)
            .map(|w| 100.0 * (w[1].1.jaccard - w[0].1.jaccard))
            .collect();
        Self {
            expected_layer: expected_layer(&deltas).ok(),
            has_negative_delta: deltas.iter().any(|&d| d < 0.0),
            per_layer,
            cumulative,
            deltas,
        }
    }

    /// `kind,layer,ji,mif1,maf1` rows in percent, then a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,layer,ji,mif1,maf1\n");
        for (kind, rows) in [("layer", &self.per_layer), ("cumulative", &self.cumulative)] {
            for (l, r) in rows.iter() {
                let _ = writeln!(
                    out,
                    "{kind},{l},{:.2},{:.2},{:.2}",
                    100.0 * r.jaccard,
                    100.0 * r.micro_f1,
                    100.0 * r.macro_f1
                );
            }
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }

    pub fn summary_line(&self) -> String {
        let e = self
            .expected_layer
            .map_or_else(|| "undefined".to_string(), |e| format!("{e:.2}"));
        let flag = if self.has_negative_delta { " (negative deltas present)" } else { "" };
        format!("# expected_layer={e}{flag}")
    }
}

/// Per-layer and cumulative probes over every layer of the store, at most
/// `jobs` heads trained at a time.
pub fn probe_layers(corpus: &Corpus, cfg: &RunConfig, jobs: usize) -> Result<LayerEvalReport> {
    let n = corpus.store.n_layers();
    let cells: Vec<(bool, usize)> = (0..n).map(|l| (false, l)).chain((0..n).map(|l| (true, l))).collect();
    let eval = |&(cumulative, l): &(bool, usize)| {
        if cumulative {
            cumulative_layer_eval(corpus, l, cfg)
        } else {
            layer_eval(corpus, l, cfg)
        }
    };
    let reports: Vec<MetricReport> = if jobs <= 1 {
        cells.iter().map(eval).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| cells.par_iter().map(eval).collect::<Result<_>>())?
    };
    let (per, cum) = reports.split_at(n);
    Ok(LayerEvalReport::from_reports(
        per.iter().cloned().enumerate().collect(),
        cum.iter().cloned().enumerate().collect(),
    ))
}
