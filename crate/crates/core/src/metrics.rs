//! Classification metrics and the cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PROB_FLOOR: f64 = 1e-12;

/// Mean `-ln p[true]` over rows of `[N, classes]`, probabilities floored at 1e-12.
pub fn cross_entropy_loss(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rank() != 2 {
        return Err(Error::shape(format!("probabilities must be [N, classes], got {:?}", probs.shape())));
    }
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if n != labels.len() || n == 0 {
        return Err(Error::shape(format!("{n} rows vs {} labels", labels.len())));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &probs.data()[i * k..(i + 1) * k];
        if y >= k {
            return Err(Error::invalid(format!("label {y} out of range for {k} classes")));
        }
        let s: f64 = row.iter().sum();
        if !((s - 1.0).abs() <= 1e-6) {
            return Err(Error::Numeric(format!("row {i} sums to {s}, not 1")));
        }
        total -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(total / n as f64)
}

/// Square confusion matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
        }
        let mut c = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::invalid(format!("class index ({t}, {p}) out of range")));
            }
            c.counts[t][p] += 1;
        }
        Ok(c)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub training_time_s: f64,
    pub param_count: u64,
    pub confusion: Confusion,
}

impl MetricsReport {
    /// Per-class values use 0/0 = 0; macro values are the unweighted means.
    pub fn from_confusion(confusion: Confusion) -> Self {
        let k = confusion.classes();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion.counts[c][c];
            let p = ratio(tp, confusion.column_sum(c));
            let r = ratio(tp, confusion.row_sum(c));
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        Self {
            accuracy: ratio(confusion.trace(), confusion.total()),
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            precision,
            recall,
            f1,
            training_time_s: 0.0,
            param_count: 0,
            confusion,
        }
    }

    pub fn with_training(mut self, training_time_s: f64, param_count: u64) -> Self {
        self.training_time_s = training_time_s;
        self.param_count = param_count;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_examples() {
        let onehot = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(cross_entropy_loss(&onehot, &[0, 2]).unwrap() <= 1e-10);

        let uniform = Tensor::filled(&[4, 5], 0.2).unwrap();
        assert!((cross_entropy_loss(&uniform, &[0, 1, 2, 4]).unwrap() - 5f64.ln()).abs() < 1e-12);

        let p = Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let expected = (-(0.5f64).ln() - (0.25f64).ln()) / 2.0;
        assert!((cross_entropy_loss(&p, &[0, 1]).unwrap() - expected).abs() < 1e-12);

        assert!(cross_entropy_loss(&p, &[0, 2]).is_err());
        let nan = Tensor::from_vec(&[1, 2], vec![f64::NAN, 1.0]).unwrap();
        assert!(matches!(cross_entropy_loss(&nan, &[0]), Err(Error::Numeric(_))));
        let zero = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        assert!((cross_entropy_loss(&zero, &[1]).unwrap() - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 3, 4, 0];
        let m = MetricsReport::from_confusion(Confusion::from_predictions(5, &y, &y).unwrap());
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn binary_hand_arithmetic() {
        let c = Confusion { counts: vec![vec![2, 1], vec![1, 2]] };
        let m = MetricsReport::from_confusion(c);
        assert!((m.macro_precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_contributes_zero() {
        let m = MetricsReport::from_confusion(Confusion::from_predictions(3, &[0, 1], &[0, 1]).unwrap());
        assert_eq!(m.precision[2], 0.0);
        assert_eq!(m.recall[2], 0.0);
        assert!((m.macro_precision - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn accuracy_is_frequency_weighted_recall(counts in proptest::collection::vec(0u64..50, 25)) {
            let c = Confusion { counts: counts.chunks(5).map(|r| r.to_vec()).collect() };
            prop_assume!(c.total() > 0);
            let m = MetricsReport::from_confusion(c.clone());
            let weighted: f64 = (0..5).map(|k| m.recall[k] * c.row_sum(k) as f64 / c.total() as f64).sum();
            prop_assert!((weighted - m.accuracy).abs() < 1e-12);
            prop_assert_eq!(m.accuracy, c.trace() as f64 / c.total() as f64);
            for v in m.precision.iter().chain(&m.recall).chain(&m.f1) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
