use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train_supervised, Activation, DenseNet, Loss, Target, TrainConfig, TrainReport};
use crate::rng::seeded;

/// Class index of the unsafe outcome in every two-class softmax.
pub const UNSAFE: usize = 0;
/// Class index of the safe outcome; the safe-class probability is the score.
pub const SAFE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Image,
    Latent,
    LatentWindow,
}

/// Output of any safety predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `true` = safe.
    pub label: bool,
    /// Softmax pair `[unsafe, safe]`.
    pub scores: [f64; 2],
    /// Pre-softmax pair, kept for temperature scaling.
    pub logits: [f64; 2],
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let logits = [logits[0], logits[1]];
        let p = crate::nn::softmax(&logits);
        Self {
            label: p[SAFE] > p[UNSAFE],
            scores: [p[0], p[1]],
            logits,
        }
    }

    /// Predicted probability of safety.
    pub fn safe_score(&self) -> f64 {
        self.scores[SAFE]
    }
}

/// Two-class safety classifier over frames, latents or latent windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    pub net: DenseNet,
    pub input_kind: InputKind,
}

impl Evaluator {
    pub fn new(input_dim: usize, hidden: usize, input_kind: InputKind, seed: u64) -> Result<Self> {
        let net = DenseNet::new(
            &[input_dim, hidden, 2],
            &[Activation::Tanh, Activation::Softmax],
            &mut seeded(seed),
        )?;
        Ok(Self { net, input_kind })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn predict(&self, input: &[f64]) -> Result<Prediction> {
        if input.len() != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                stage: format!("evaluator ({:?} input)", self.input_kind),
                expected: self.net.input_dim(),
                got: input.len(),
            });
        }
        Ok(Prediction::from_logits(&self.net.forward_logits(input)?))
    }

    pub fn probs(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(input)
    }
}

pub fn class_targets(labels: &[bool]) -> Vec<Target> {
    labels
        .iter()
        .map(|&l| Target::Class(if l { SAFE } else { UNSAFE }))
        .collect()
}

pub(crate) fn require_both_classes(labels: &[bool]) -> Result<()> {
    if !labels.iter().any(|&l| l) {
        return Err(Error::SingleClass { missing: "safe" });
    }
    if !labels.iter().any(|&l| !l) {
        return Err(Error::SingleClass { missing: "unsafe" });
    }
    Ok(())
}

/// Cross-entropy training of a fresh evaluator; labels should already be
/// rebalanced.
pub fn train_evaluator(
    inputs: &[Vec<f64>],
    labels: &[bool],
    input_kind: InputKind,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(Evaluator, TrainReport)> {
    require_both_classes(labels)?;
    let dim = inputs
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidArgument("no evaluator inputs".into()))?;
    if let Some(bad) = inputs.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            stage: "evaluator training inputs".into(),
            expected: dim,
            got: bad.len(),
        });
    }
    let mut ev = Evaluator::new(dim, hidden, input_kind, cfg.seed)?;
    let report = train_supervised(&mut ev.net, inputs, &class_targets(labels), Loss::CrossEntropy, cfg)?;
    Ok((ev, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_of_score_pair() {
        let p = Prediction::from_logits(&[0.9f64.ln(), 0.1f64.ln()]);
        assert!(!p.label);
        assert!((p.scores[UNSAFE] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn label_invariant_under_logit_shift() {
        let a = Prediction::from_logits(&[0.3, 1.2]);
        let b = Prediction::from_logits(&[0.3 + 50.0, 1.2 + 50.0]);
        assert_eq!(a.label, b.label);
        assert!((a.scores[1] - b.scores[1]).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![0.0], vec![1.0]];
        let cfg = TrainConfig::default();
        assert!(train_evaluator(&xs, &[true, true], InputKind::Latent, 4, &cfg).is_err());
    }

    #[test]
    fn wrong_input_width_names_stage() {
        let ev = Evaluator::new(4, 3, InputKind::Latent, 0).unwrap();
        let err = ev.predict(&[0.0; 3]).unwrap_err().to_string();
        assert!(err.contains("evaluator"), "{err}");
    }
}
