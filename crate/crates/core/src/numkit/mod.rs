//! Dense `f64` vectors and matrices plus the handful of elementwise functions
//! and losses the classifier needs.
//!
//! Losses reduce by the mean over every component, so a batch of `n` rows with
//! `k` labels divides by `n * k`.

mod rng;

pub use rng::Rng;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// Owned vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("Vec64"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }
}

impl Deref for Vec64 {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vec64 {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec64> for Vec<f64> {
    fn from(v: Vec64) -> Self {
        v.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Mat64"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice yields `0 x 0`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix still has rows
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn ensure_shape(&self, context: &'static str, expected: (usize, usize)) -> Result<()> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context,
                expected,
                actual: self.shape(),
            })
        }
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Mat64) -> Result<Mat64> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                expected: (self.cols, rhs.cols),
                actual: rhs.shape(),
            });
        }
        let mut out = Mat64::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(rhs.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`.
    pub fn t_matmul(&self, rhs: &Mat64) -> Result<Mat64> {
        if self.rows != rhs.rows {
            return Err(Error::ShapeMismatch {
                context: "t_matmul",
                expected: (self.rows, rhs.cols),
                actual: rhs.shape(),
            });
        }
        let mut out = Mat64::zeros(self.cols, rhs.cols);
        for r in 0..self.rows {
            let b = rhs.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (oj, &bj) in out.row_mut(i).iter_mut().zip(b) {
                    *oj += a * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T`.
    pub fn matmul_t(&self, rhs: &Mat64) -> Result<Mat64> {
        if self.cols != rhs.cols {
            return Err(Error::ShapeMismatch {
                context: "matmul_t",
                expected: (rhs.rows, self.cols),
                actual: rhs.shape(),
            });
        }
        let mut out = Mat64::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(a, rhs.row(j));
            }
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                actual: bias.len(),
            });
        }
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat64 {
        Mat64 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self + scale * other`, in place.
    pub fn add_scaled(&mut self, other: &Mat64, scale: f64) -> Result<()> {
        other.ensure_shape("add_scaled", self.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Stacks `self` on top of `other`. Either side may have zero rows.
    pub fn vstack(&self, other: &Mat64) -> Result<Mat64> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                context: "vstack",
                expected: (other.rows, self.cols),
                actual: other.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Mat64 {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat64 {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat64 {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    // Scaled to avoid overflow for large components.
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec64> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm < NORM_FLOOR {
        return Err(Error::ZeroNorm { norm });
    }
    Ok(Vec64::from_raw(v.iter().map(|x| x / norm).collect()))
}

/// Isotropic random direction: standard normal components, normalized.
pub fn sample_unit_vector(rng: &mut Rng, dim: usize) -> Result<Vec64> {
    assert!(dim >= 1, "sample_unit_vector: dim must be >= 1");
    let mut last = Error::ZeroNorm { norm: 0.0 };
    for _ in 0..8 {
        let draw: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        match l2_normalize(&draw) {
            Ok(u) => return Ok(u),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Logistic function without overflow for any finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` computed without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn stable_sigmoid(z: &[f64]) -> Vec64 {
    Vec64::from_raw(z.iter().map(|&v| sigmoid(v)).collect())
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        })
    }
}

/// Mean binary cross-entropy of logits `z` against 0/1 targets `y`.
///
/// Uses `max(z,0) - z*y + ln(1 + e^-|z|)`, which is exact in the tails.
pub fn bce_with_logits(z: &[f64], y: &[f64]) -> Result<f64> {
    check_len(z, y)?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| zi.max(0.0) - zi * yi + (-zi.abs()).exp().ln_1p())
        .sum();
    Ok(total / z.len() as f64)
}

/// Mean squared difference.
pub fn mse(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    if p.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(&*l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroNorm { .. })));
        assert!(matches!(l2_normalize(&[1e-13]), Err(Error::ZeroNorm { .. })));
    }

    #[test]
    fn unit_vector_examples() {
        let a = sample_unit_vector(&mut Rng::new(7), 768).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let b = sample_unit_vector(&mut Rng::new(7), 768).unwrap();
        assert_eq!(a, b);
        let c = sample_unit_vector(&mut Rng::new(7), 3).unwrap();
        let d = sample_unit_vector(&mut Rng::new(8), 3).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(stable_sigmoid(&[0.0])[0], 0.5);
        assert!((stable_sigmoid(&[1000.0])[0] - 1.0).abs() < 1e-12);
        assert!(stable_sigmoid(&[-1000.0])[0].abs() < 1e-12);
        assert!(stable_sigmoid(&[1e6, -1e6]).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn bce_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_with_logits(&[0.0], &[1.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((bce_with_logits(&[0.0, 0.0], &[0.0, 1.0]).unwrap() - ln2).abs() < 1e-15);
        assert!(bce_with_logits(&[30.0], &[1.0]).unwrap() < 1e-12);
        assert!(matches!(
            bce_with_logits(&[0.0], &[1.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.5], &[0.0]).unwrap(), 0.25);
        assert!(mse(&[1.0], &[]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Mat64::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Mat64::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[4.0, 5.0, 10.0, 11.0]);
        // a^T a via both routes
        let ata = a.t_matmul(&a).unwrap();
        let bt = Mat64::from_rows(&[[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]]).unwrap();
        assert_eq!(ata, bt.matmul(&a).unwrap());
        assert_eq!(a.matmul_t(&a).unwrap().as_slice(), &[14.0, 32.0, 32.0, 77.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Vec64::new(vec![1.0, f64::NAN]).is_err());
        assert!(Mat64::from_vec(1, 1, vec![f64::INFINITY]).is_err());
        assert!(Mat64::from_vec(2, 1, vec![1.0]).is_err());
    }

    /// Direct textbook formula, only safe for moderate logits.
    fn bce_naive(z: &[f64], y: &[f64]) -> f64 {
        let n = z.len() as f64;
        z.iter()
            .zip(y)
            .map(|(&zi, &yi)| {
                let s = 1.0 / (1.0 + (-zi).exp());
                -(yi * s.ln() + (1.0 - yi) * (1.0 - s).ln())
            })
            .sum::<f64>()
            / n
    }

    proptest! {
        #[test]
        fn normalize_is_unit_and_scale_free(
            v in prop::collection::vec(-100.0f64..100.0, 1..40),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(l2_norm(&v) > 1e-6);
            let u = l2_normalize(&v).unwrap();
            prop_assert!((u.norm() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let w = l2_normalize(&scaled).unwrap();
            for (a, b) in u.iter().zip(w.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn mse_symmetric_nonnegative(
            pq in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
        ) {
            let (p, q): (Vec<f64>, Vec<f64>) = pq.into_iter().unzip();
            let a = mse(&p, &q).unwrap();
            prop_assert_eq!(a, mse(&q, &p).unwrap());
            prop_assert!(a >= 0.0);
            prop_assert_eq!(mse(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn bce_matches_naive(
            zy in prop::collection::vec((-10.0f64..10.0, prop::bool::ANY), 1..30),
        ) {
            let z: Vec<f64> = zy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = zy.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
            let stable = bce_with_logits(&z, &y).unwrap();
            prop_assert!(stable >= 0.0);
            prop_assert!((stable - bce_naive(&z, &y)).abs() < 1e-9);
        }

        #[test]
        fn sigmoid_symmetry(z in prop::collection::vec(-1e6f64..1e6, 1..30)) {
            let pos = stable_sigmoid(&z);
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            let neg = stable_sigmoid(&neg);
            for (a, b) in pos.iter().zip(neg.iter()) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
