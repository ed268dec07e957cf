use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with safe as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn count(labels: &[bool], predictions: &[bool]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::DimensionMismatch {
                stage: "confusion counts".into(),
                expected: labels.len(),
                got: predictions.len(),
            });
        }
        let mut c = Confusion::default();
        for (&l, &p) in labels.iter().zip(predictions) {
            match (l, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// `2TP / (2TP + FP + FN)`; 1 when there is nothing to get wrong.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn fpr(&self) -> Result<f64> {
        if self.fp + self.tn == 0 {
            return Err(Error::InvalidArgument("FPR needs at least one unsafe label".into()));
        }
        Ok(self.fp as f64 / (self.fp + self.tn) as f64)
    }
}

pub fn f1(labels: &[bool], predictions: &[bool]) -> Result<f64> {
    Ok(Confusion::count(labels, predictions)?.f1())
}

pub fn fpr(labels: &[bool], predictions: &[bool]) -> Result<f64> {
    Confusion::count(labels, predictions)?.fpr()
}
