//! Two-layer classifier head with hand-written reverse mode.
//!
//! The layer stack is `linear -> tanh -> dropout -> linear`, producing one
//! logit per label. [`MlpParams::forward`] records everything
//! [`MlpParams::backward`] needs in a [`ForwardTrace`], so backward is a pure
//! function of `(params, trace, upstream gradient)`.

mod adamw;
mod checkpoint;

pub use adamw::{AdamWConfig, OptimizerState};
pub use checkpoint::{load_params, params_from_bytes, params_to_bytes, save_params};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Mat64, Rng, Vec64};

/// Forward-pass mode. Dropout is only active in training mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout: f64 },
    Eval,
}

/// Weights and biases of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `d_in x d_hidden`
    pub w1: Mat64,
    pub b1: Vec64,
    /// `d_hidden x d_out`
    pub w2: Mat64,
    pub b2: Vec64,
}

/// Gradients shaped like [`MlpParams`], plus the gradient with respect to the
/// input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Mat64,
    pub b1: Vec64,
    pub w2: Mat64,
    pub b2: Vec64,
    /// `batch x d_in`
    pub input: Mat64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Mat64,
    pub pre_activation: Mat64,
    pub hidden: Mat64,
    /// Entries are `0` or `1/(1-p)`; all ones outside training mode.
    pub dropout_mask: Mat64,
    pub dropped: Mat64,
    pub logits: Mat64,
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init(rng: &mut Rng, d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        assert!(d_in >= 1 && d_hidden >= 1 && d_out >= 1, "dims must be >= 1");
        let mut xavier = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.uniform_in(-bound, bound))
                .collect();
            Mat64::from_vec(fan_in, fan_out, data).expect("finite by construction")
        };
        let w1 = xavier(d_in, d_hidden);
        let w2 = xavier(d_hidden, d_out);
        Self {
            w1,
            b1: Vec64::zeros(d_hidden),
            w2,
            b2: Vec64::zeros(d_out),
        }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self {
            w1: Mat64::zeros(d_in, d_hidden),
            b1: Vec64::zeros(d_hidden),
            w2: Mat64::zeros(d_hidden, d_out),
            b2: Vec64::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.cols()
    }

    /// Flat views in the fixed order `w1, b1, w2, b2`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Runs the head on a `batch x d_in` matrix.
    ///
    /// `rng` is only drawn from in [`Mode::Train`] with nonzero dropout.
    pub fn forward(&self, x: &Mat64, mode: Mode, rng: &mut Rng) -> Result<ForwardTrace> {
        if x.cols() != self.d_in() {
            return Err(Error::ShapeMismatch {
                context: "forward input",
                expected: (x.rows(), self.d_in()),
                actual: x.shape(),
            });
        }
        let mut pre = x.matmul(&self.w1)?;
        pre.add_row_vector(&self.b1)?;
        let hidden = pre.map(f64::tanh);

        let mut mask = Mat64::zeros(hidden.rows(), hidden.cols());
        match mode {
            Mode::Train { dropout } if dropout > 0.0 => {
                assert!(dropout < 1.0, "dropout must be < 1");
                let keep = 1.0 / (1.0 - dropout);
                for m in mask.as_mut_slice() {
                    *m = if rng.uniform() < dropout { 0.0 } else { keep };
                }
            }
            _ => mask.as_mut_slice().fill(1.0),
        }
        let mut dropped = hidden.clone();
        for (d, m) in dropped.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *d *= m;
        }

        let mut logits = dropped.matmul(&self.w2)?;
        logits.add_row_vector(&self.b2)?;
        Ok(ForwardTrace {
            input: x.clone(),
            pre_activation: pre,
            hidden,
            dropout_mask: mask,
            dropped,
            logits,
        })
    }

    /// Logits in evaluation mode.
    pub fn predict_logits(&self, x: &Mat64) -> Result<Mat64> {
        // Eval mode never draws, so any generator will do.
        let mut unused = Rng::new(0);
        Ok(self.forward(x, Mode::Eval, &mut unused)?.logits)
    }

    /// Reverse pass given `d loss / d logits`.
    pub fn backward(&self, trace: &ForwardTrace, d_logits: &Mat64) -> Result<MlpGrads> {
        d_logits.ensure_shape("backward upstream", trace.logits.shape())?;

        let w2 = trace.dropped.t_matmul(d_logits)?;
        let b2 = d_logits.sum_rows();

        let mut d_pre = d_logits.matmul_t(&self.w2)?;
        for ((g, m), h) in d_pre
            .as_mut_slice()
            .iter_mut()
            .zip(trace.dropout_mask.as_slice())
            .zip(trace.hidden.as_slice())
        {
            *g *= m * (1.0 - h * h);
        }

        let w1 = trace.input.t_matmul(&d_pre)?;
        let b1 = d_pre.sum_rows();
        let input = d_pre.matmul_t(&self.w1)?;
        Ok(MlpGrads {
            w1,
            b1: Vec64::from_raw(b1),
            w2,
            b2: Vec64::from_raw(b2),
            input,
        })
    }
}

impl MlpGrads {
    pub fn zeros(params: &MlpParams, batch: usize) -> Self {
        Self {
            w1: Mat64::zeros(params.d_in(), params.d_hidden()),
            b1: Vec64::zeros(params.d_hidden()),
            w2: Mat64::zeros(params.d_hidden(), params.d_out()),
            b2: Vec64::zeros(params.d_out()),
            input: Mat64::zeros(batch, params.d_in()),
        }
    }

    /// Parameter gradients in the order of [`MlpParams::tensors`].
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    /// `self.params += scale * other.params`. Input gradients are left alone.
    pub fn add_scaled_params(&mut self, other: &MlpGrads, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(dst.len(), src.len(), "gradient shape mismatch");
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) && self.input.is_finite()
    }
}

/// Mean BCE over every entry of `logits` and its gradient.
pub fn bce_loss_and_grad(logits: &Mat64, targets: &Mat64) -> Result<(f64, Mat64)> {
    targets.ensure_shape("bce targets", logits.shape())?;
    let n = logits.as_slice().len();
    if n == 0 {
        return Ok((0.0, logits.clone()));
    }
    let loss = crate::numkit::bce_with_logits(logits.as_slice(), targets.as_slice())?;
    let scale = 1.0 / n as f64;
    let grad = logits
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(&z, &y)| (sigmoid(z) - y) * scale)
        .collect();
    Ok((loss, Mat64::from_vec(logits.rows(), logits.cols(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Mat64 {
        let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
        Mat64::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn init_shapes_and_zero_biases() {
        let p = MlpParams::init(&mut Rng::new(1), 768, 768, 11);
        assert_eq!(p.w1.shape(), (768, 768));
        assert_eq!(p.b1.len(), 768);
        assert_eq!(p.w2.shape(), (768, 11));
        assert_eq!(p.b2.len(), 11);
        assert!(p.b1.iter().chain(p.b2.iter()).all(|&b| b == 0.0));
        let bound = (6.0f64 / (768.0 + 11.0)).sqrt();
        assert!(p.w2.as_slice().iter().all(|w| w.abs() <= bound));
        assert_eq!(p, MlpParams::init(&mut Rng::new(1), 768, 768, 11));
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let p = MlpParams::zeros(5, 4, 3);
        let x = random_matrix(&mut Rng::new(3), 6, 5, 2.0);
        let logits = p.predict_logits(&x).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = Rng::new(4);
        let p = MlpParams::init(&mut rng, 10, 6, 11);
        let x = random_matrix(&mut rng, 8, 10, 1.0);
        let a = p.forward(&x, Mode::Eval, &mut Rng::new(1)).unwrap();
        let b = p.forward(&x, Mode::Eval, &mut Rng::new(2)).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.logits.shape(), (8, 11));
        assert!(a.dropout_mask.as_slice().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = MlpParams::zeros(5, 4, 3);
        let x = Mat64::zeros(2, 6);
        assert!(matches!(
            p.forward(&x, Mode::Eval, &mut Rng::new(0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn dropout_rate_and_rescale() {
        // 200 x 100 = 2e4 Bernoulli(0.1) draws; 3 sigma band.
        let p = MlpParams::init(&mut Rng::new(0), 4, 100, 2);
        let x = random_matrix(&mut Rng::new(1), 200, 4, 1.0);
        let trace = p
            .forward(&x, Mode::Train { dropout: 0.1 }, &mut Rng::new(2))
            .unwrap();
        let mask = trace.dropout_mask.as_slice();
        let n = mask.len() as f64;
        let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64;
        let sigma = (n * 0.1 * 0.9).sqrt();
        assert!((zeros - 0.1 * n).abs() < 3.0 * sigma, "zeros {zeros}");
        let keep = 1.0 / 0.9;
        assert!(mask.iter().all(|&m| m == 0.0 || m == keep));
        // E[mask] = 1
        let mean = mask.iter().sum::<f64>() / n;
        assert!((mean - 1.0).abs() < 3.0 * keep * (0.1f64 * 0.9 / n).sqrt());
    }

    #[test]
    fn bce_head_at_half_targets_has_zero_grads() {
        let p = MlpParams::zeros(3, 4, 2);
        let x = random_matrix(&mut Rng::new(5), 4, 3, 1.0);
        let trace = p.forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        let y = Mat64::from_vec(4, 2, vec![0.5; 8]).unwrap();
        let (_, d) = bce_loss_and_grad(&trace.logits, &y).unwrap();
        let g = p.backward(&trace, &d).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_pure() {
        let mut rng = Rng::new(8);
        let p = MlpParams::init(&mut rng, 5, 4, 3);
        let x = random_matrix(&mut rng, 3, 5, 1.0);
        let trace = p
            .forward(&x, Mode::Train { dropout: 0.3 }, &mut rng)
            .unwrap();
        let up = random_matrix(&mut rng, 3, 3, 1.0);
        let a = p.backward(&trace, &up).unwrap();
        let b = p.backward(&trace, &up).unwrap();
        assert_eq!(a, b);
    }
}
