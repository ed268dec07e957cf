use serde::{Deserialize, Serialize};

use super::evaluator::{class_targets, require_both_classes, Prediction};
use super::vae::FrozenEncoder;
use crate::error::{Error, Result};
use crate::nn::{train_supervised, Activation, DenseNet, Loss, TrainConfig, TrainReport};
use crate::rng::seeded;
use crate::sim::{Action, Observation, FRAME_PIXELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonoInput {
    /// Flattened frames; the head's first layer acts as a jointly learned encoder.
    RawPixels,
    /// Frozen-VAE posterior means.
    Latent,
}

/// Direct window-to-label predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonolithicPredictor {
    pub head: DenseNet,
    pub input: MonoInput,
    pub m: usize,
    pub k: usize,
    pub encoder_fingerprint: Option<String>,
}

/// Frames (or latents) of a window, each followed by its action sign.
pub fn window_features(parts: &[&[f64]], actions: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(parts.iter().map(|p| p.len() + 1).sum());
    for (p, a) in parts.iter().zip(actions) {
        x.extend_from_slice(p);
        x.push(*a);
    }
    x
}

pub fn mono_input_dim(input: MonoInput, m: usize, latent_dim: usize) -> usize {
    match input {
        MonoInput::RawPixels => m * (FRAME_PIXELS + 1),
        MonoInput::Latent => m * (latent_dim + 1),
    }
}

impl MonolithicPredictor {
    pub fn features(&self, enc: Option<&FrozenEncoder>, window: &[(Observation, Action)]) -> Result<Vec<f64>> {
        if window.len() != self.m {
            return Err(Error::DimensionMismatch {
                stage: "monolithic window".into(),
                expected: self.m,
                got: window.len(),
            });
        }
        let actions: Vec<f64> = window.iter().map(|(_, a)| a.sign()).collect();
        match self.input {
            MonoInput::RawPixels => {
                let parts: Vec<&[f64]> = window.iter().map(|(o, _)| o.pixels.as_slice()).collect();
                Ok(window_features(&parts, &actions))
            }
            MonoInput::Latent => {
                let enc = enc.ok_or_else(|| {
                    Error::StageOrder("latent monolithic predictor needs its frozen encoder".into())
                })?;
                if Some(enc.fingerprint()) != self.encoder_fingerprint.as_deref() {
                    return Err(Error::StageOrder(
                        "monolithic head was trained on a different encoder".into(),
                    ));
                }
                let latents = window
                    .iter()
                    .map(|(o, _)| enc.encode(o))
                    .collect::<Result<Vec<_>>>()?;
                let parts: Vec<&[f64]> = latents.iter().map(|z| z.as_slice()).collect();
                Ok(window_features(&parts, &actions))
            }
        }
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.head.input_dim() {
            return Err(Error::DimensionMismatch {
                stage: "monolithic head".into(),
                expected: self.head.input_dim(),
                got: x.len(),
            });
        }
        Ok(Prediction::from_logits(&self.head.forward_logits(x)?))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train_monolithic(
    inputs: &[Vec<f64>],
    labels: &[bool],
    input: MonoInput,
    m: usize,
    k: usize,
    encoder_fingerprint: Option<String>,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(MonolithicPredictor, TrainReport)> {
    require_both_classes(labels)?;
    let dim = inputs
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidArgument("no monolithic training windows".into()))?;
    let mut head = DenseNet::new(
        &[dim, hidden, 2],
        &[Activation::Tanh, Activation::Softmax],
        &mut seeded(cfg.seed),
    )?;
    let report = train_supervised(&mut head, inputs, &class_targets(labels), Loss::CrossEntropy, cfg)?;
    Ok((
        MonolithicPredictor {
            head,
            input,
            m,
            k,
            encoder_fingerprint,
        },
        report,
    ))
}
