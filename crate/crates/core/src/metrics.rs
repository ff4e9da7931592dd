//! Multilabel evaluation: Jaccard index, micro F1 and macro F1.
//!
//! Conventions:
//! - a prediction is positive iff `sigmoid(logit) > threshold` (strict);
//! - a sample whose gold and predicted label sets are both empty scores a
//!   Jaccard of 1;
//! - a label with `TP + FP + FN == 0` has F1 = 0 in the macro average.
//!
//! All three metrics are functions of pooled counts ([`MetricCounts`]), so
//! evaluating shards and merging gives the same report as evaluating the
//! whole set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Mat64};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Dense 0/1 matrix, `samples x labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Entries greater than 0.5 become positive.
    pub fn from_mat(m: &Mat64) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&v| v > 0.5).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn to_mat(&self) -> Mat64 {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Mat64::from_vec(self.rows, self.cols, data).expect("0/1 entries")
    }
}

pub fn predict_labels(logits: &Mat64, threshold: f64) -> LabelMatrix {
    LabelMatrix {
        rows: logits.rows(),
        cols: logits.cols(),
        data: logits.as_slice().iter().map(|&z| sigmoid(z) > threshold).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Pooled counts from which every metric is derived.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricCounts {
    pub n_samples: u64,
    pub jaccard_sum: f64,
    pub per_label: Vec<Confusion>,
}

impl MetricCounts {
    pub fn new(n_labels: usize) -> Self {
        Self {
            n_samples: 0,
            jaccard_sum: 0.0,
            per_label: vec![Confusion::default(); n_labels],
        }
    }

    pub fn from_predictions(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<Self> {
        let mut c = Self::new(gold.cols);
        c.add(gold, pred)?;
        Ok(c)
    }

    pub fn add(&mut self, gold: &LabelMatrix, pred: &LabelMatrix) -> Result<()> {
        check_shapes(gold, pred)?;
        if gold.cols != self.per_label.len() {
            return Err(Error::LengthMismatch {
                expected: self.per_label.len(),
                actual: gold.cols,
            });
        }
        for r in 0..gold.rows {
            let (mut inter, mut union) = (0u32, 0u32);
            for (c, (&g, &p)) in gold.row(r).iter().zip(pred.row(r)).enumerate() {
                let conf = &mut self.per_label[c];
                match (g, p) {
                    (true, true) => conf.tp += 1,
                    (false, true) => conf.fp += 1,
                    (true, false) => conf.fn_ += 1,
                    (false, false) => {}
                }
                inter += (g && p) as u32;
                union += (g || p) as u32;
            }
            self.jaccard_sum += if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            };
        }
        self.n_samples += gold.rows as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricCounts) -> Result<()> {
        if other.per_label.len() != self.per_label.len() {
            return Err(Error::LengthMismatch {
                expected: self.per_label.len(),
                actual: other.per_label.len(),
            });
        }
        self.n_samples += other.n_samples;
        self.jaccard_sum += other.jaccard_sum;
        for (a, b) in self.per_label.iter_mut().zip(&other.per_label) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn jaccard(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.jaccard_sum / self.n_samples as f64
        }
    }

    pub fn micro_f1(&self) -> f64 {
        let mut pooled = Confusion::default();
        for c in &self.per_label {
            pooled.merge(c);
        }
        pooled.f1()
    }

    pub fn per_label_f1(&self) -> Vec<f64> {
        self.per_label.iter().map(Confusion::f1).collect()
    }

    pub fn macro_f1(&self) -> f64 {
        if self.per_label.is_empty() {
            return 0.0;
        }
        self.per_label_f1().iter().sum::<f64>() / self.per_label.len() as f64
    }

    pub fn report(&self, threshold: f64) -> MetricReport {
        MetricReport {
            jaccard: self.jaccard(),
            micro_f1: self.micro_f1(),
            macro_f1: self.macro_f1(),
            threshold,
            per_label_f1: self.per_label_f1(),
            n_samples: self.n_samples,
        }
    }
}

fn check_shapes(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<()> {
    if gold.shape() != pred.shape() {
        return Err(Error::ShapeMismatch {
            context: "gold vs predicted labels",
            expected: gold.shape(),
            actual: pred.shape(),
        });
    }
    Ok(())
}

pub fn jaccard_index(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    Ok(MetricCounts::from_predictions(gold, pred)?.jaccard())
}

pub fn micro_f1(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    Ok(MetricCounts::from_predictions(gold, pred)?.micro_f1())
}

pub fn macro_f1(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<f64> {
    Ok(MetricCounts::from_predictions(gold, pred)?.macro_f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub jaccard: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub threshold: f64,
    pub per_label_f1: Vec<f64>,
    pub n_samples: u64,
}

impl MetricReport {
    pub fn compute(gold: &LabelMatrix, pred: &LabelMatrix, threshold: f64) -> Result<Self> {
        Ok(MetricCounts::from_predictions(gold, pred)?.report(threshold))
    }

    pub const CSV_HEADER: &'static str = "ji,mif1,maf1,threshold,n_samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{},{}",
            self.jaccard, self.micro_f1, self.macro_f1, self.threshold, self.n_samples
        )
    }
}

/// Fixed-width text table with one row per `(name, report)`; scores in
/// percent with two decimals.
pub fn text_table<'a>(first_column: &str, rows: impl IntoIterator<Item = (String, &'a MetricReport)>) -> String {
    let rows: Vec<_> = rows.into_iter().collect();
    let width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain([first_column.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{first_column:<width$} | {:>6} | {:>6} | {:>6}", "JI", "MiF1", "MaF1");
    let _ = writeln!(out, "{}", "-".repeat(width + 30));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name:<width$} | {:>6.2} | {:>6.2} | {:>6.2}",
            100.0 * r.jaccard,
            100.0 * r.micro_f1,
            100.0 * r.macro_f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(rows: &[&[u8]]) -> LabelMatrix {
        let cols = rows[0].len();
        LabelMatrix::new(
            rows.len(),
            cols,
            rows.iter().flat_map(|r| r.iter().map(|&v| v == 1)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let logits = Mat64::from_rows(&[[0.0, 2.0, -1.0]]).unwrap();
        let p = predict_labels(&logits, 0.5);
        assert_eq!(p.row(0), &[false, true, false]);
        let none = predict_labels(&Mat64::from_rows(&[[50.0, 1e3]]).unwrap(), 1.0);
        assert_eq!(none.row(0), &[false, false]);
    }

    #[test]
    fn jaccard_hand_cases() {
        // labels: anger, joy
        let gold = lm(&[&[1, 0]]);
        let pred = lm(&[&[1, 1]]);
        assert_eq!(jaccard_index(&gold, &pred).unwrap(), 0.5);
        let same = lm(&[&[1, 0], &[0, 0]]);
        assert_eq!(jaccard_index(&same, &same).unwrap(), 1.0);
    }

    #[test]
    fn f1_hand_case() {
        let gold = lm(&[&[1, 0], &[1, 1]]);
        let pred = lm(&[&[1, 1], &[0, 1]]);
        let micro = micro_f1(&gold, &pred).unwrap();
        let mac = macro_f1(&gold, &pred).unwrap();
        assert!((micro - 2.0 / 3.0).abs() < 1e-15);
        assert!((mac - 2.0 / 3.0).abs() < 1e-15);
        let c = MetricCounts::from_predictions(&gold, &pred).unwrap();
        assert_eq!(c.per_label[0], Confusion { tp: 1, fp: 0, fn_: 1 });
        assert_eq!(c.per_label[1], Confusion { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn perfect_and_complement() {
        let gold = lm(&[&[1, 0, 1], &[0, 1, 0]]);
        assert_eq!(micro_f1(&gold, &gold).unwrap(), 1.0);
        assert_eq!(macro_f1(&gold, &gold).unwrap(), 1.0);
        let comp = lm(&[&[0, 1, 0], &[1, 0, 1]]);
        assert_eq!(micro_f1(&gold, &comp).unwrap(), 0.0);
        assert_eq!(macro_f1(&gold, &comp).unwrap(), 0.0);
        assert_eq!(jaccard_index(&gold, &comp).unwrap(), 0.0);
    }

    #[test]
    fn never_predicted_absent_label_scores_zero() {
        let gold = lm(&[&[1, 0]]);
        let c = MetricCounts::from_predictions(&gold, &gold).unwrap();
        assert_eq!(c.per_label_f1(), vec![1.0, 0.0]);
        assert_eq!(c.macro_f1(), 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let a = lm(&[&[1, 0]]);
        let b = lm(&[&[1, 0, 0]]);
        assert!(matches!(jaccard_index(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn table_layout() {
        let r = MetricReport::compute(&lm(&[&[1, 0]]), &lm(&[&[1, 1]]), 0.5).unwrap();
        let t = text_table("Layers", [("Layer 0".to_string(), &r)]);
        assert!(t.lines().nth(2).unwrap().contains(" 50.00 "), "{t}");
    }
}
