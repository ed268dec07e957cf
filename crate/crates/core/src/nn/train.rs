use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::dense::DenseNet;
use super::loss::{loss_and_grad, Loss, Target};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

/// Anything whose parameters live in one or more flat slices.
///
/// Gradients passed back to [`train`] are the concatenation of the slices in
/// the order returned here.
pub trait Trainable {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Trainable for DenseNet {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.params_mut()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_window: usize,
    pub plateau_eps: f64,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            plateau_window: 10,
            plateau_eps: 1e-4,
            lr_decay: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.plateau_window == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and plateau_window must be >= 1".into(),
            ));
        }
        if self.plateau_eps.is_nan() || self.plateau_eps <= 0.0 {
            return Err(Error::Config("plateau_eps must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of every epoch.
    pub loss_curve: Vec<f64>,
    /// Running minimum of `loss_curve`.
    pub best_curve: Vec<f64>,
    /// Epoch indices at which the learning rate was decayed.
    pub lr_decays: Vec<usize>,
    pub stop: StopReason,
    pub final_lr: f64,
}

/// Mini-batch Adam training with the plateau rule.
///
/// After every epoch, once `plateau_window` epochs have passed since the
/// start (or the last decay), the mean per-epoch improvement over that window
/// is compared with `plateau_eps`. The first plateau decays the learning rate
/// by `lr_decay`; the second one stops training.
///
/// `batch_grad` returns the mean loss and flat gradient for the given sample
/// indices.
pub fn train<M, F>(model: &mut M, n_samples: usize, cfg: &TrainConfig, mut batch_grad: F) -> Result<TrainReport>
where
    M: Trainable,
    F: FnMut(&M, &[usize], &mut Rng) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let param_count: usize = model.param_slices_mut().iter().map(|s| s.len()).sum();
    let mut adam = AdamState::new(param_count);
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut lr = cfg.learning_rate;
    let mut loss_curve: Vec<f64> = Vec::new();
    let mut best_curve: Vec<f64> = Vec::new();
    let mut lr_decays = Vec::new();
    let mut window_start = 0usize;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_id, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grad) = batch_grad(model, batch, &mut rng)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NanLoss {
                    epoch,
                    batch: batch_id,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut model.param_slices_mut(), &grad, &mut adam, lr)?;
        }
        let mean = epoch_loss / n_samples as f64;
        loss_curve.push(mean);
        let best = best_curve.last().map_or(mean, |b: &f64| b.min(mean));
        best_curve.push(best);

        if epoch >= window_start + cfg.plateau_window {
            let improvement =
                (loss_curve[epoch - cfg.plateau_window] - mean) / cfg.plateau_window as f64;
            if improvement < cfg.plateau_eps {
                if lr_decays.is_empty() {
                    lr *= cfg.lr_decay;
                    lr_decays.push(epoch);
                    window_start = epoch;
                } else {
                    stop = StopReason::Plateau;
                    break;
                }
            }
        }
    }
    Ok(TrainReport {
        loss_curve,
        best_curve,
        lr_decays,
        stop,
        final_lr: lr,
    })
}

/// Supervised training of a single network on in-memory inputs and targets.
pub fn train_supervised(
    net: &mut DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Target],
    loss: Loss,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            stage: "training targets".into(),
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    train(net, inputs.len(), cfg, |net, batch, _| {
        let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
        let ts: Vec<Target> = batch.iter().map(|&i| targets[i].clone()).collect();
        loss_and_grad(net, loss, &xs, &ts)
    })
}
