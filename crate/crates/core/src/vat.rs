//! Virtual adversarial perturbations for multilabel heads.
//!
//! For an input `x` the perturbation is the radius-`epsilon` direction that
//! most changes the model's own sigmoid outputs. It is approximated by
//! starting at `r = epsilon * q` for a random unit `q`, taking the gradient
//! `g` of the divergence with respect to `r`, and setting
//! `r = epsilon * g / |g|`. The reference outputs at `x` are constants
//! throughout: no gradient reaches the parameters through them.
//!
//! The regularizer is then `D(p(y|x), p(y|x + r))` with the perturbed branch
//! live, and the training objective adds `alpha` times its batch mean to the
//! supervised BCE.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{bce_loss_and_grad, MlpGrads, MlpParams, Mode};
use crate::numkit::{l2_norm, sample_unit_vector, sigmoid, softplus, Mat64, Rng, Vec64, NORM_FLOOR};

/// How the change between reference and perturbed outputs is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceVariant {
    /// Mean squared difference of sigmoid outputs.
    MseSigmoid,
    /// Mean squared difference of raw logits.
    MseLogits,
    /// Mean over labels of `KL(Bernoulli(ref) || Bernoulli(pert))`.
    KlPerLabel,
}

impl DivergenceVariant {
    pub const ALL: [DivergenceVariant; 3] = [Self::MseSigmoid, Self::MseLogits, Self::KlPerLabel];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MseSigmoid => "mse_sigmoid",
            Self::MseLogits => "mse_logits",
            Self::KlPerLabel => "kl_per_label",
        }
    }

    /// Value and derivative w.r.t. `pert` of one label's term.
    #[inline]
    fn term(self, reference: f64, pert: f64) -> (f64, f64) {
        match self {
            Self::MseSigmoid => {
                let (p, q) = (sigmoid(reference), sigmoid(pert));
                let d = q - p;
                (d * d, 2.0 * d * q * (1.0 - q))
            }
            Self::MseLogits => {
                let d = pert - reference;
                (d * d, 2.0 * d)
            }
            Self::KlPerLabel => {
                let (p, q) = (sigmoid(reference), sigmoid(pert));
                // log-probabilities via softplus stay finite when saturated
                let (ln_p, ln_1mp) = (-softplus(-reference), -softplus(reference));
                let (ln_q, ln_1mq) = (-softplus(-pert), -softplus(pert));
                let kl = p * (ln_p - ln_q) + (1.0 - p) * (ln_1mp - ln_1mq);
                (kl.max(0.0), q - p)
            }
        }
    }
}

impl fmt::Display for DivergenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DivergenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown divergence {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VatConfig {
    /// L2 radius of the perturbation.
    pub epsilon: f64,
    /// Weight of the adversarial term.
    pub alpha: f64,
    pub divergence: DivergenceVariant,
    pub power_iters: usize,
}

impl Default for VatConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            alpha: 1.0,
            divergence: DivergenceVariant::MseSigmoid,
            power_iters: 1,
        }
    }
}

impl VatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.power_iters == 0 {
            return Err(Error::Config("power_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean divergence over every entry of the two logit matrices.
pub fn divergence(variant: DivergenceVariant, logits_ref: &Mat64, logits_pert: &Mat64) -> Result<f64> {
    logits_pert.ensure_shape("divergence", logits_ref.shape())?;
    let n = logits_ref.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = logits_ref
        .as_slice()
        .iter()
        .zip(logits_pert.as_slice())
        .map(|(&a, &b)| variant.term(a, b).0)
        .sum();
    Ok(total / n as f64)
}

/// Per-row divergence (mean over labels) and its gradient w.r.t. the
/// perturbed logits. Rows with `active[i] == false` contribute zero.
/// Gradients are multiplied by `grad_scale`.
fn row_divergences(
    variant: DivergenceVariant,
    logits_ref: &Mat64,
    logits_pert: &Mat64,
    active: &[bool],
    grad_scale: f64,
) -> (Vec<f64>, Mat64) {
    let k = logits_ref.cols();
    let mut values = vec![0.0; logits_ref.rows()];
    let mut grad = Mat64::zeros(logits_ref.rows(), k);
    let per_label = 1.0 / k as f64;
    for i in 0..logits_ref.rows() {
        if !active[i] {
            continue;
        }
        let mut sum = 0.0;
        let g = grad.row_mut(i);
        for ((gj, &a), &b) in g.iter_mut().zip(logits_ref.row(i)).zip(logits_pert.row(i)) {
            let (v, d) = variant.term(a, b);
            sum += v;
            *gj = d * per_label * grad_scale;
        }
        values[i] = sum * per_label;
    }
    (values, grad)
}

/// Perturbations for a batch together with the reference outputs they were
/// computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Stop-gradient logits at the unperturbed inputs.
    pub reference: Mat64,
    /// `batch x d_in`; rows of degenerate samples are zero.
    pub r: Mat64,
    /// `false` where the divergence gradient vanished.
    pub valid: Vec<bool>,
}

fn add(a: &Mat64, b: &Mat64) -> Result<Mat64> {
    let mut out = a.clone();
    out.add_scaled(b, 1.0)?;
    Ok(out)
}

/// Virtual adversarial perturbation for every row of `x`.
///
/// One unit direction is drawn per row, in row order. A row whose gradient
/// norm falls below `1e-12` is marked invalid and gets a zero perturbation.
pub fn compute_r_vadv_batch(
    params: &MlpParams,
    x: &Mat64,
    cfg: &VatConfig,
    rng: &mut Rng,
) -> Result<Perturbation> {
    cfg.validate()?;
    let reference = params.predict_logits(x)?;
    let (batch, d_in) = x.shape();

    let mut r = Mat64::zeros(batch, d_in);
    for i in 0..batch {
        let q = sample_unit_vector(rng, d_in)?;
        for (ri, qi) in r.row_mut(i).iter_mut().zip(q.iter()) {
            *ri = cfg.epsilon * qi;
        }
    }
    let mut valid = vec![true; batch];

    let mut no_dropout = Rng::new(0);
    for _ in 0..cfg.power_iters {
        let trace = params.forward(&add(x, &r)?, Mode::Eval, &mut no_dropout)?;
        // Per-sample gradients: no 1/batch factor, so the ZeroNorm floor
        // does not depend on batch size.
        let (_, d_logits) = row_divergences(cfg.divergence, &reference, &trace.logits, &valid, 1.0);
        let g = params.backward(&trace, &d_logits)?.input;
        for (i, ok) in valid.iter_mut().enumerate() {
            if !*ok {
                continue;
            }
            let norm = l2_norm(g.row(i));
            let row = r.row_mut(i);
            if norm < NORM_FLOOR || !norm.is_finite() {
                *ok = false;
                row.fill(0.0);
                continue;
            }
            for (ri, gi) in row.iter_mut().zip(g.row(i)) {
                *ri = cfg.epsilon * gi / norm;
            }
        }
    }
    Ok(Perturbation { reference, r, valid })
}

/// Virtual adversarial perturbation for a single input vector.
pub fn compute_r_vadv(params: &MlpParams, x: &[f64], cfg: &VatConfig, rng: &mut Rng) -> Result<Vec64> {
    let xm = Mat64::from_vec(1, x.len(), x.to_vec())?;
    let p = compute_r_vadv_batch(params, &xm, cfg, rng)?;
    if !p.valid[0] {
        return Err(Error::ZeroNorm { norm: 0.0 });
    }
    Vec64::new(p.r.into_vec())
}

/// Adversarial loss for a fixed perturbation.
///
/// `reference` is treated as a constant. The loss is the mean over all rows
/// (invalid rows count as zero) of the per-row divergence.
pub fn vadv_loss_with_perturbation(
    params: &MlpParams,
    x: &Mat64,
    variant: DivergenceVariant,
    perturbation: &Perturbation,
) -> Result<(f64, MlpGrads)> {
    let batch = x.rows();
    if batch == 0 {
        return Err(Error::EmptyBatch);
    }
    perturbation.r.ensure_shape("perturbation", x.shape())?;
    perturbation
        .reference
        .ensure_shape("reference logits", (batch, params.d_out()))?;

    let trace = params.forward(&add(x, &perturbation.r)?, Mode::Eval, &mut Rng::new(0))?;
    let scale = 1.0 / batch as f64;
    let (rows, d_logits) = row_divergences(
        variant,
        &perturbation.reference,
        &trace.logits,
        &perturbation.valid,
        scale,
    );
    let loss = rows.iter().sum::<f64>() * scale;
    let grads = params.backward(&trace, &d_logits)?;
    Ok((loss, grads))
}

/// Batch-mean virtual adversarial loss and its parameter gradients.
pub fn vadv_loss(params: &MlpParams, x_batch: &Mat64, cfg: &VatConfig, rng: &mut Rng) -> Result<(f64, MlpGrads)> {
    if x_batch.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let p = compute_r_vadv_batch(params, x_batch, cfg, rng)?;
    vadv_loss_with_perturbation(params, x_batch, cfg.divergence, &p)
}

/// Loss terms of one semi-supervised step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MlvatLoss {
    pub total: f64,
    pub bce: f64,
    pub vadv: f64,
}

/// Supervised BCE on the labeled rows plus `alpha` times the adversarial loss
/// on labeled and unlabeled rows together.
///
/// Dropout applies to the supervised branch only and draws from
/// `dropout_rng`; the perturbation directions draw from `vat_rng`. With
/// `alpha == 0` nothing adversarial is computed and `vat_rng` is untouched.
///
/// The returned input gradient has one row per labeled row followed by one
/// per unlabeled row.
#[allow(clippy::too_many_arguments)]
pub fn mlvat_loss(
    params: &MlpParams,
    labeled_x: &Mat64,
    labeled_y: &Mat64,
    unlabeled_x: &Mat64,
    cfg: &VatConfig,
    dropout: f64,
    dropout_rng: &mut Rng,
    vat_rng: &mut Rng,
) -> Result<(MlvatLoss, MlpGrads)> {
    let (n_l, n_u) = (labeled_x.rows(), unlabeled_x.rows());
    if n_l + n_u == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut grads = MlpGrads::zeros(params, n_l + n_u);
    let mut loss = MlvatLoss::default();

    if n_l > 0 {
        let trace = params.forward(labeled_x, Mode::Train { dropout }, dropout_rng)?;
        let (bce, d_logits) = bce_loss_and_grad(&trace.logits, labeled_y)?;
        let g = params.backward(&trace, &d_logits)?;
        grads.add_scaled_params(&g, 1.0);
        grads.input.as_mut_slice()[..g.input.as_slice().len()].copy_from_slice(g.input.as_slice());
        loss.bce = bce;
    }

    if cfg.alpha > 0.0 {
        let union = labeled_x.vstack(unlabeled_x)?;
        let (vadv, g) = vadv_loss(params, &union, cfg, vat_rng)?;
        grads.add_scaled_params(&g, cfg.alpha);
        grads.input.add_scaled(&g.input, cfg.alpha)?;
        loss.vadv = vadv;
    }
    loss.total = loss.bce + cfg.alpha * loss.vadv;
    Ok((loss, grads))
}
