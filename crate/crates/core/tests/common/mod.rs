//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the code paths it is used to check: gradients come from
//! central differences of the forward loss, metrics from set arithmetic on
//! index sets, and perturbation directions from exhaustive search.

#![allow(dead_code)]

use std::collections::BTreeSet;

use mlvat::net::{MlpParams, Mode};
use mlvat::numkit::{Mat64, Rng};

pub const FD_STEP: f64 = 1e-5;

/// Per-entry relative error with the usual floor on the denominator.
pub fn relative_error(numerical: f64, analytical: f64) -> f64 {
    (numerical - analytical).abs() / (numerical.abs() + analytical.abs()).max(1e-8)
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Mat64 {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Mat64::from_vec(rows, cols, data).unwrap()
}

pub fn random_labels(rng: &mut Rng, rows: usize, cols: usize) -> Mat64 {
    let data = (0..rows * cols)
        .map(|_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
        .collect();
    Mat64::from_vec(rows, cols, data).unwrap()
}

/// Random parameters with nonzero biases so every code path is exercised.
pub fn random_params(rng: &mut Rng, d_in: usize, d_hidden: usize, d_out: usize) -> MlpParams {
    let mut p = MlpParams::init(rng, d_in, d_hidden, d_out);
    for b in p.b1.iter_mut().chain(p.b2.iter_mut()) {
        *b = 0.3 * rng.normal();
    }
    p
}

/// Mean BCE written out directly from the definition of the logistic loss.
pub fn bce_reference(logits: &Mat64, y: &Mat64) -> f64 {
    let n = logits.as_slice().len() as f64;
    logits
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&z, &t)| {
            let s = 1.0 / (1.0 + (-z).exp());
            -(t * s.ln() + (1.0 - t) * (1.0 - s).ln())
        })
        .sum::<f64>()
        / n
}

/// Eval-mode forward written independently of `MlpParams::forward`.
pub fn logits_reference(p: &MlpParams, x: &Mat64) -> Mat64 {
    let (d_in, d_h, d_out) = (p.d_in(), p.d_hidden(), p.d_out());
    let mut out = Vec::with_capacity(x.rows() * d_out);
    for r in 0..x.rows() {
        let h: Vec<f64> = (0..d_h)
            .map(|j| {
                let s: f64 = (0..d_in).map(|i| x.get(r, i) * p.w1.get(i, j)).sum();
                (s + p.b1[j]).tanh()
            })
            .collect();
        for k in 0..d_out {
            let s: f64 = (0..d_h).map(|j| h[j] * p.w2.get(j, k)).sum();
            out.push(s + p.b2[k]);
        }
    }
    Mat64::from_vec(x.rows(), d_out, out).unwrap()
}

/// Central-difference gradient of `loss` with respect to every parameter, in
/// the order of `MlpParams::tensors`.
pub fn fd_param_grads(p: &MlpParams, loss: impl Fn(&MlpParams) -> f64) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = Default::default();
    for (t, slot) in out.iter_mut().enumerate() {
        let len = p.tensors()[t].len();
        for i in 0..len {
            let mut plus = p.clone();
            plus.tensors_mut()[t][i] += FD_STEP;
            let mut minus = p.clone();
            minus.tensors_mut()[t][i] -= FD_STEP;
            slot.push((loss(&plus) - loss(&minus)) / (2.0 * FD_STEP));
        }
    }
    out
}

/// Central-difference gradient of `loss` with respect to every input entry.
pub fn fd_input_grads(x: &Mat64, loss: impl Fn(&Mat64) -> f64) -> Vec<f64> {
    (0..x.as_slice().len())
        .map(|i| {
            let mut plus = x.clone();
            plus.as_mut_slice()[i] += FD_STEP;
            let mut minus = x.clone();
            minus.as_mut_slice()[i] -= FD_STEP;
            (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_relative_error(numerical: &[f64], analytical: &[f64]) -> f64 {
    assert_eq!(numerical.len(), analytical.len());
    numerical
        .iter()
        .zip(analytical)
        .map(|(&n, &a)| relative_error(n, a))
        .fold(0.0, f64::max)
}

/// Active-label index set of row `r`.
fn label_set(m: &Mat64, r: usize) -> BTreeSet<usize> {
    (0..m.cols()).filter(|&c| m.get(r, c) > 0.5).collect()
}

/// Jaccard index by explicit set intersection and union.
pub fn jaccard_oracle(gold: &Mat64, pred: &Mat64) -> f64 {
    let n = gold.rows();
    let mut total = 0.0;
    for r in 0..n {
        let g = label_set(gold, r);
        let p = label_set(pred, r);
        let union = g.union(&p).count();
        total += if union == 0 {
            1.0
        } else {
            g.intersection(&p).count() as f64 / union as f64
        };
    }
    total / n as f64
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Confusion counts per label by enumerating (sample, label) pairs.
pub fn confusion_oracle(gold: &Mat64, pred: &Mat64) -> Vec<(usize, usize, usize)> {
    (0..gold.cols())
        .map(|c| {
            let mut counts = (0, 0, 0);
            for r in 0..gold.rows() {
                match (gold.get(r, c) > 0.5, pred.get(r, c) > 0.5) {
                    (true, true) => counts.0 += 1,
                    (false, true) => counts.1 += 1,
                    (true, false) => counts.2 += 1,
                    (false, false) => {}
                }
            }
            counts
        })
        .collect()
}

pub fn micro_f1_oracle(gold: &Mat64, pred: &Mat64) -> f64 {
    let (tp, fp, fn_) = confusion_oracle(gold, pred)
        .into_iter()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    f1_from_counts(tp, fp, fn_)
}

pub fn macro_f1_oracle(gold: &Mat64, pred: &Mat64) -> f64 {
    let per: Vec<f64> = confusion_oracle(gold, pred)
        .into_iter()
        .map(|(tp, fp, fn_)| f1_from_counts(tp, fp, fn_))
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Sigmoid-MSE divergence of a single sample, straight from the definition.
pub fn mse_sigmoid_reference(a: &[f64], b: &[f64]) -> f64 {
    let s = |z: f64| 1.0 / (1.0 + (-z).exp());
    a.iter().zip(b).map(|(&x, &y)| (s(x) - s(y)).powi(2)).sum::<f64>() / a.len() as f64
}

/// Exhaustive search over `n_dirs` equally spaced directions on the circle
/// of radius `eps` around `x` (2-D inputs only). Returns the maximizing unit
/// direction and the divergence it attains.
pub fn grid_max_direction(p: &MlpParams, x: [f64; 2], eps: f64, n_dirs: usize) -> ([f64; 2], f64) {
    let xm = Mat64::from_rows(&[x]).unwrap();
    let reference = logits_reference(p, &xm);
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for k in 0..n_dirs {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n_dirs as f64;
        let u = [theta.cos(), theta.sin()];
        let xp = Mat64::from_rows(&[[x[0] + eps * u[0], x[1] + eps * u[1]]]).unwrap();
        let d = mse_sigmoid_reference(reference.row(0), logits_reference(p, &xp).row(0));
        if d > best.1 {
            best = (u, d);
        }
    }
    best
}

/// Same computation as `grid_max_direction` but for an arbitrary offset.
pub fn divergence_at(p: &MlpParams, x: [f64; 2], r: [f64; 2]) -> f64 {
    let xm = Mat64::from_rows(&[x]).unwrap();
    let xp = Mat64::from_rows(&[[x[0] + r[0], x[1] + r[1]]]).unwrap();
    mse_sigmoid_reference(
        logits_reference(p, &xm).row(0),
        logits_reference(p, &xp).row(0),
    )
}

/// Eval-mode logits through the library, for tests that need the real path.
pub fn logits(p: &MlpParams, x: &Mat64) -> Mat64 {
    p.forward(x, Mode::Eval, &mut Rng::new(0)).unwrap().logits
}

/// Which single coordinate a central difference moves.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Input(usize, usize),
    W1(usize, usize),
    B1(usize),
    W2(usize, usize),
    B2(usize),
}

fn pre_and_hidden(p: &MlpParams, x: &Mat64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (d_in, d_h) = (p.d_in(), p.d_hidden());
    let pre: Vec<Vec<f64>> = (0..x.rows())
        .map(|r| {
            (0..d_h)
                .map(|j| (0..d_in).map(|i| x.get(r, i) * p.w1.get(i, j)).sum::<f64>() + p.b1[j])
                .collect()
        })
        .collect();
    let hid = pre.iter().map(|row| row.iter().map(|v| v.tanh()).collect()).collect();
    (pre, hid)
}

/// `(L(c + h) - L(c - h)) / 2h` for the mean BCE of the eval-mode head,
/// with `L(c + h) - L(c - h)` carried through the network as a difference
/// instead of as two nearly equal losses. Every layer's difference comes from
/// an exact identity (linearity, `tanh a - tanh b = sinh(a - b) / (cosh a
/// cosh b)`, `softplus a - softplus b = ln(1 + sigmoid(b) expm1(a - b))`), so
/// the result is the plain central difference without cancellation error.
pub fn bce_central_difference(p: &MlpParams, x: &Mat64, y: &Mat64, c: Coord) -> f64 {
    let h = FD_STEP;
    let (mut pp, mut pm, mut xp, mut xm) = (p.clone(), p.clone(), x.clone(), x.clone());
    match c {
        Coord::Input(r, i) => {
            let k = r * x.cols() + i;
            xp.as_mut_slice()[k] += h;
            xm.as_mut_slice()[k] -= h;
        }
        Coord::W1(i, j) => {
            pp.w1.set(i, j, p.w1.get(i, j) + h);
            pm.w1.set(i, j, p.w1.get(i, j) - h);
        }
        Coord::B1(j) => {
            pp.b1[j] += h;
            pm.b1[j] -= h;
        }
        Coord::W2(j, k) => {
            pp.w2.set(j, k, p.w2.get(j, k) + h);
            pm.w2.set(j, k, p.w2.get(j, k) - h);
        }
        Coord::B2(k) => {
            pp.b2[k] += h;
            pm.b2[k] -= h;
        }
    }
    let (pre_p, _) = pre_and_hidden(&pp, &xp);
    let (pre_m, hid_m) = pre_and_hidden(&pm, &xm);
    let (d_h, d_out) = (p.d_hidden(), p.d_out());
    let mut total = 0.0;
    for r in 0..x.rows() {
        // Exact pre-activation differences (the pre-activation is linear in
        // every coordinate).
        let d_pre: Vec<f64> = (0..d_h)
            .map(|j| match c {
                Coord::Input(rr, i) if rr == r => 2.0 * h * p.w1.get(i, j),
                Coord::W1(i, jj) if jj == j => 2.0 * h * x.get(r, i),
                Coord::B1(jj) if jj == j => 2.0 * h,
                _ => 0.0,
            })
            .collect();
        let d_hid: Vec<f64> = (0..d_h)
            .map(|j| d_pre[j].sinh() / (pre_p[r][j].cosh() * pre_m[r][j].cosh()))
            .collect();
        for k in 0..d_out {
            let z_m = (0..d_h).map(|j| hid_m[r][j] * pm.w2.get(j, k)).sum::<f64>() + pm.b2[k];
            let d_z = match c {
                Coord::W2(j, kk) if kk == k => 2.0 * h * hid_m[r][j],
                Coord::B2(kk) if kk == k => 2.0 * h,
                Coord::W2(..) | Coord::B2(_) => 0.0,
                _ => (0..d_h).map(|j| d_hid[j] * p.w2.get(j, k)).sum(),
            };
            let s_m = 1.0 / (1.0 + (-z_m).exp());
            total += (s_m * d_z.exp_m1()).ln_1p() - y.get(r, k) * d_z;
        }
    }
    total / (x.rows() * d_out) as f64 / (2.0 * h)
}

/// [`bce_central_difference`] for every parameter, in `MlpParams::tensors` order.
pub fn bce_fd_param_grads(p: &MlpParams, x: &Mat64, y: &Mat64) -> [Vec<f64>; 4] {
    let (d_in, d_h, d_out) = (p.d_in(), p.d_hidden(), p.d_out());
    let f = |c| bce_central_difference(p, x, y, c);
    [
        (0..d_in * d_h).map(|n| f(Coord::W1(n / d_h, n % d_h))).collect(),
        (0..d_h).map(|j| f(Coord::B1(j))).collect(),
        (0..d_h * d_out).map(|n| f(Coord::W2(n / d_out, n % d_out))).collect(),
        (0..d_out).map(|k| f(Coord::B2(k))).collect(),
    ]
}

/// [`bce_central_difference`] for every input entry, row-major.
pub fn bce_fd_input_grads(p: &MlpParams, x: &Mat64, y: &Mat64) -> Vec<f64> {
    (0..x.rows() * x.cols())
        .map(|n| bce_central_difference(p, x, y, Coord::Input(n / x.cols(), n % x.cols())))
        .collect()
}
