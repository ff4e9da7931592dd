use std::time::Instant;

use serde::Serialize;

use super::config::{RunConfig, TrainMode, UnlabeledSources};
use crate::data::{
    make_semisup_split, BatchPlan, Corpus, EmbeddingStore, EpochState, LabeledRecord, LayerSelection, Pools,
};
use crate::error::{Error, Result};
use crate::metrics::{predict_labels, LabelMatrix, MetricCounts, MetricReport};
use crate::net::{bce_loss_and_grad, AdamWConfig, MlpParams, Mode, OptimizerState};
use crate::numkit::{Mat64, Rng};
use crate::vat::mlvat_loss;

// Substream ids of the run generator.
const INIT: u64 = 1;
const LABELED_ORDER: u64 = 2;
const UNLABELED_ORDER: u64 = 3;
const DROPOUT: u64 = 4;
const VAT: u64 = 5;

const EVAL_CHUNK: usize = 1024;

/// Feature matrices for one run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub pools: Pools,
    pub eval_x: Mat64,
    pub eval_y: Mat64,
}

fn labels_of(records: &[&LabeledRecord]) -> Result<Mat64> {
    let k = records.first().map_or(0, |r| r.labels.len());
    let mut data = Vec::with_capacity(records.len() * k);
    for r in records {
        if r.labels.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: r.labels.len(),
            });
        }
        data.extend(r.labels.iter().map(|&v| v as f64));
    }
    Mat64::from_vec(records.len(), k, data)
}

/// Label matrix and features for `records`.
pub fn features_and_labels(
    records: &[&LabeledRecord],
    store: &EmbeddingStore,
    layer: LayerSelection,
) -> Result<(Mat64, Mat64)> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    Ok((store.features(&ids, layer)?, labels_of(records)?))
}

impl TrainData {
    /// Builds the labeled and unlabeled pools and the evaluation split.
    pub fn prepare(cfg: &RunConfig, corpus: &Corpus) -> Result<Self> {
        cfg.validate()?;
        let others = match &cfg.unlabeled_sources {
            UnlabeledSources::AllOthers => corpus.languages(),
            UnlabeledSources::Only(v) => v.clone(),
        };
        let split = make_semisup_split(&corpus.records, &cfg.target, cfg.rho, &others, cfg.train_plus_dev, cfg.seed)?;
        let by_id: std::collections::HashMap<&str, &LabeledRecord> =
            corpus.records.iter().map(|r| (r.id.as_str(), r)).collect();
        let labeled: Vec<&LabeledRecord> = split.labeled_ids.iter().map(|id| by_id[id.as_str()]).collect();
        let (labeled_x, labeled_y) = features_and_labels(&labeled, &corpus.store, cfg.layer)?;
        let unlabeled_x = if cfg.mode == TrainMode::Mlvat && cfg.unlabeled_batch > 0 {
            corpus.store.features(&split.unlabeled_ids, cfg.layer)?
        } else {
            Mat64::zeros(0, labeled_x.cols())
        };
        let eval = corpus.select(cfg.eval_language(), cfg.eval_split);
        if eval.is_empty() {
            return Err(Error::Data(format!("no {} records for {}", cfg.eval_split, cfg.eval_language())));
        }
        let (eval_x, eval_y) = features_and_labels(&eval, &corpus.store, cfg.layer)?;
        if eval_y.cols() != labeled_y.cols() {
            return Err(Error::Data("evaluation and training label counts differ".into()));
        }
        Ok(Self {
            pools: Pools {
                labeled_x,
                labeled_y,
                unlabeled_x,
            },
            eval_x,
            eval_y,
        })
    }
}

/// Outcome of one run. `wall_clock_secs` is left out of the serialized
/// record so that records of repeated runs compare byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_eval: usize,
    pub report: MetricReport,
    pub epoch_losses: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
    #[serde(skip)]
    pub params: Option<MlpParams>,
}

impl RunResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialize")
    }
}

/// Predicts in chunks and pools the counts.
pub fn evaluate_features(params: &MlpParams, x: &Mat64, y: &Mat64, threshold: f64) -> Result<MetricReport> {
    let mut counts = MetricCounts::new(y.cols());
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let logits = params.predict_logits(&x.select_rows(chunk))?;
        counts.add(
            &LabelMatrix::from_mat(&y.select_rows(chunk)),
            &predict_labels(&logits, threshold),
        )?;
    }
    Ok(counts.report(threshold))
}

/// Evaluates `params` on `records` with dropout disabled.
pub fn evaluate(
    params: &MlpParams,
    records: &[&LabeledRecord],
    store: &EmbeddingStore,
    layer: LayerSelection,
    threshold: f64,
) -> Result<MetricReport> {
    let (x, y) = features_and_labels(records, store, layer)?;
    evaluate_features(params, &x, &y, threshold)
}

fn require_mode(cfg: &RunConfig, mode: TrainMode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::Config(format!("expected mode {mode}, config has {}", cfg.mode)));
    }
    Ok(())
}

/// Supervised baseline: BCE on the labeled pool only.
pub fn train_supervised(cfg: &RunConfig, corpus: &Corpus) -> Result<RunResult> {
    require_mode(cfg, TrainMode::Sup)?;
    train_prepared(cfg, &TrainData::prepare(cfg, corpus)?)
}

/// BCE on labeled rows plus the adversarial term on labeled and unlabeled rows.
pub fn train_mlvat(cfg: &RunConfig, corpus: &Corpus) -> Result<RunResult> {
    require_mode(cfg, TrainMode::Mlvat)?;
    train_prepared(cfg, &TrainData::prepare(cfg, corpus)?)
}

/// Runs whichever mode `cfg` names.
pub fn run(cfg: &RunConfig, corpus: &Corpus) -> Result<RunResult> {
    train_prepared(cfg, &TrainData::prepare(cfg, corpus)?)
}

/// Trains on already built matrices. The final-epoch parameters are evaluated.
pub fn train_prepared(cfg: &RunConfig, data: &TrainData) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pools = &data.pools;
    let (n_labeled, d_in, k) = (pools.labeled_x.rows(), pools.labeled_x.cols(), pools.labeled_y.cols());
    if n_labeled == 0 {
        return Err(Error::Data("labeled pool is empty".into()));
    }
    let sup = cfg.mode == TrainMode::Sup;
    let n_unlabeled = if sup { 0 } else { pools.unlabeled_x.rows() };
    let plan = BatchPlan {
        unlabeled_batch: if sup { 0 } else { cfg.unlabeled_batch },
        ..cfg.plan()
    };

    let root = Rng::new(cfg.seed);
    let mut params = MlpParams::init(&mut root.substream(INIT), d_in, cfg.hidden_dim, k);
    let mut opt = OptimizerState::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        &params,
    );
    let mut batches = EpochState::new(
        plan,
        n_labeled,
        n_unlabeled,
        root.substream(LABELED_ORDER),
        root.substream(UNLABELED_ORDER),
    );
    let mut dropout_rng = root.substream(DROPOUT);
    let mut vat_rng = root.substream(VAT);
    let vat = cfg.vat();
    let mode = Mode::Train { dropout: cfg.dropout };

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        batches.begin_epoch();
        let (mut sum, mut steps) = (0.0, 0usize);
        while let Some(b) = batches.next_batch(pools) {
            let (loss, grads) = if sup {
                let trace = params.forward(&b.labeled_x, mode, &mut dropout_rng)?;
                let (bce, d) = bce_loss_and_grad(&trace.logits, &b.labeled_y)?;
                (bce, params.backward(&trace, &d)?)
            } else {
                let (l, g) = mlvat_loss(
                    &params,
                    &b.labeled_x,
                    &b.labeled_y,
                    &b.unlabeled_x,
                    &vat,
                    cfg.dropout,
                    &mut dropout_rng,
                    &mut vat_rng,
                )?;
                (l.total, g)
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite("training loss or gradient"));
            }
            opt.adamw_step(&mut params, &grads);
            sum += loss;
            steps += 1;
        }
        epoch_losses.push(sum / steps as f64);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters"));
    }

    let report = evaluate_features(&params, &data.eval_x, &data.eval_y, cfg.threshold)?;
    Ok(RunResult {
        config: cfg.clone(),
        n_labeled,
        n_unlabeled,
        n_eval: data.eval_x.rows(),
        report,
        epoch_losses,
        seed: cfg.seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        params: Some(params),
    })
}
