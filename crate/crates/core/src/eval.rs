//! Accuracy and F1 on a held-out set.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::SiameseModel;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Predicted positive iff `prob >= threshold`.
    pub fn from_predictions(probs: &[f64], labels: &[f64], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= threshold, y == 1.0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Metrics {
        let n = self.total();
        let accuracy = if n == 0 { 0.0 } else { (self.tp + self.tn) as f64 / n as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics { accuracy, f1 }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

/// Thresholded predictions of `g(f(x))` scored against the labels of `test`.
pub fn evaluate(model: &SiameseModel, test: &Dataset, threshold: f64) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::contract("evaluation on an empty test set"));
    }
    let (x, labels) = test.to_matrix()?;
    let probs = model.predict_proba(&x)?;
    Ok(Confusion::from_predictions(&probs, &labels, threshold).metrics())
}
