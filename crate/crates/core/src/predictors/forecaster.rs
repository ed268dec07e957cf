use serde::{Deserialize, Serialize};

use super::vae::FrozenEncoder;
use crate::error::{Error, Result};
use crate::nn::{train_supervised, Activation, DenseNet, Loss, Target, TrainConfig, TrainReport};
use crate::rng::seeded;

/// Anything that maps a window of `m` latents (plus action signs) to `n`
/// future latents, the last one aligned with the horizon.
pub trait Forecast {
    fn input_window(&self) -> usize;
    fn output_window(&self) -> usize;
    fn forecast(&self, latents: &[Vec<f64>], actions: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Flattens `m` latents, each followed by its action sign.
pub fn forecaster_input(latents: &[Vec<f64>], actions: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(latents.iter().map(|l| l.len() + 1).sum());
    for (z, a) in latents.iter().zip(actions) {
        x.extend_from_slice(z);
        x.push(*a);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecasterShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub latent_dim: usize,
    pub hidden: usize,
}

/// Windowed feed-forward latent regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentForecaster {
    pub net: DenseNet,
    pub shape: ForecasterShape,
    /// Fingerprint of the frozen encoder whose latents it was trained on.
    pub encoder_fingerprint: String,
}

impl Forecast for LatentForecaster {
    fn input_window(&self) -> usize {
        self.shape.m
    }

    fn output_window(&self) -> usize {
        self.shape.n
    }

    fn forecast(&self, latents: &[Vec<f64>], actions: &[f64]) -> Result<Vec<Vec<f64>>> {
        let ForecasterShape { m, latent_dim: d, .. } = self.shape;
        if latents.len() != m || actions.len() != m {
            return Err(Error::DimensionMismatch {
                stage: "forecaster window".into(),
                expected: m,
                got: latents.len().min(actions.len()),
            });
        }
        if let Some(z) = latents.iter().find(|z| z.len() != d) {
            return Err(Error::DimensionMismatch {
                stage: "forecaster latent".into(),
                expected: d,
                got: z.len(),
            });
        }
        let out = self.net.forward(&forecaster_input(latents, actions))?;
        Ok(out.chunks(d).map(|c| c.to_vec()).collect())
    }
}

/// Training pairs for a forecaster, stamped with the encoder that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWindowSet {
    pub inputs: Vec<Vec<f64>>,
    /// Concatenated `n` future latents per window.
    pub targets: Vec<Vec<f64>>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub latent_dim: usize,
    pub encoder_fingerprint: String,
}

impl LatentWindowSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Fits a forecaster by MSE on latent targets from `encoder`.
///
/// Targets made by any other encoder (e.g. one retrained after the targets
/// were computed) are rejected.
pub fn train_forecaster(
    encoder: &FrozenEncoder,
    set: &LatentWindowSet,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(LatentForecaster, TrainReport)> {
    if set.encoder_fingerprint != encoder.fingerprint() {
        return Err(Error::StageOrder(format!(
            "latent targets come from encoder {} but the frozen encoder is {}",
            set.encoder_fingerprint,
            encoder.fingerprint()
        )));
    }
    if set.n == 0 || set.n > set.k {
        return Err(Error::InvalidArgument(format!(
            "output window n={} must satisfy 1 <= n <= k={}",
            set.n, set.k
        )));
    }
    if set.is_empty() {
        return Err(Error::InvalidArgument("no forecaster training windows".into()));
    }
    let d = set.latent_dim;
    let shape = ForecasterShape {
        m: set.m,
        n: set.n,
        k: set.k,
        latent_dim: d,
        hidden,
    };
    let mut net = DenseNet::new(
        &[set.m * (d + 1), hidden, set.n * d],
        &[Activation::Tanh, Activation::Identity],
        &mut seeded(cfg.seed),
    )?;
    let targets: Vec<Target> = set.targets.iter().map(|t| Target::Values(t.clone())).collect();
    let report = train_supervised(&mut net, &set.inputs, &targets, Loss::Mse, cfg)?;
    Ok((
        LatentForecaster {
            net,
            shape,
            encoder_fingerprint: encoder.fingerprint().to_string(),
        },
        report,
    ))
}

/// Mean squared error per latent component over a window set.
pub fn forecast_mse<F: Forecast>(f: &F, set: &LatentWindowSet) -> Result<f64> {
    let d = set.latent_dim;
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, t) in set.inputs.iter().zip(&set.targets) {
        let (latents, actions): (Vec<Vec<f64>>, Vec<f64>) = x
            .chunks(d + 1)
            .map(|c| (c[..d].to_vec(), c[d]))
            .unzip();
        let pred = f.forecast(&latents, &actions)?;
        for (p, tv) in pred.iter().flatten().zip(t) {
            total += (p - tv) * (p - tv);
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}
