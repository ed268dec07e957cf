use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{train, Activation, DenseNet, TrainConfig, TrainReport, Trainable};
use crate::rng::seeded;
use crate::sim::{Observation, FRAME_PIXELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    /// Weight of the KL term.
    pub lambda1: f64,
    /// Weight of the per-pixel mean squared reconstruction error; the pixel
    /// count turns it into a per-frame sum.
    pub recon_weight: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: 64,
            lambda1: 1.0,
            recon_weight: FRAME_PIXELS as f64,
        }
    }
}

/// Variational autoencoder over frames. The encoder emits `[mean; log_var]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeEncoder {
    pub enc: DenseNet,
    pub dec: DenseNet,
    pub latent_dim: usize,
    pub lambda1: f64,
    pub recon_weight: f64,
}

impl Trainable for VaeEncoder {
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.enc.params_mut(), self.dec.params_mut()]
    }
}

/// Closed-form `KL(N(mean, exp(log_var)) || N(0, I))`.
pub fn kl_standard_normal(mean: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeReport {
    pub train: TrainReport,
    /// Batches whose mean posterior variance fell below 1e-6.
    pub collapse_warnings: usize,
}

impl VaeEncoder {
    pub fn new(cfg: &VaeConfig, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let d = cfg.latent_dim;
        let enc = DenseNet::new(
            &[FRAME_PIXELS, cfg.hidden, 2 * d],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )?;
        let dec = DenseNet::new(
            &[d, cfg.hidden, FRAME_PIXELS],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        )?;
        Ok(Self {
            enc,
            dec,
            latent_dim: d,
            lambda1: cfg.lambda1,
            recon_weight: cfg.recon_weight,
        })
    }

    /// Posterior mean and log-variance.
    pub fn posterior(&self, pixels: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.enc.forward(pixels)?;
        let lv = out.split_off(self.latent_dim);
        Ok((out, lv))
    }

    pub fn encode(&self, y: &Observation) -> Result<Vec<f64>> {
        Ok(self.posterior(&y.pixels)?.0)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Observation> {
        Ok(Observation::from_pixels(self.dec.forward(z)?))
    }

    /// Mean batch loss and flat gradient (encoder then decoder params) for
    /// the given frames and reparameterization noise.
    pub fn loss_grad(&self, frames: &[&[f64]], noise: &[Vec<f64>]) -> Result<(f64, Vec<f64>, f64)> {
        if frames.is_empty() || frames.len() != noise.len() {
            return Err(Error::InvalidArgument(
                "VAE batch needs one noise vector per frame".into(),
            ));
        }
        let d = self.latent_dim;
        let n = frames.len() as f64;
        let ne = self.enc.param_count();
        let mut grad = vec![0.0; ne + self.dec.param_count()];
        let (genc, gdec) = grad.split_at_mut(ne);
        let mut total = 0.0;
        let mut var_sum = 0.0;
        let pix_scale = self.recon_weight / FRAME_PIXELS as f64;
        for (y, eps) in frames.iter().zip(noise) {
            let etrace = self.enc.forward_trace(y)?;
            let h = etrace.output();
            let (mean, lv) = h.split_at(d);
            let sd: Vec<f64> = lv.iter().map(|v| (0.5 * v).exp()).collect();
            let z: Vec<f64> = (0..d).map(|i| mean[i] + sd[i] * eps[i]).collect();
            let dtrace = self.dec.forward_trace(&z)?;
            let recon = dtrace.output();
            let mut dy = Vec::with_capacity(recon.len());
            let mut se = 0.0;
            for (r, t) in recon.iter().zip(y.iter()) {
                let diff = r - t;
                se += diff * diff;
                dy.push(2.0 * diff * pix_scale / n);
            }
            let kl = kl_standard_normal(mean, lv);
            total += (se * pix_scale + self.lambda1 * kl) / n;
            var_sum += sd.iter().map(|s| s * s).sum::<f64>() / d as f64;

            let dz = self.dec.backward(&dtrace, &dy, gdec);
            let mut dh = vec![0.0; 2 * d];
            for i in 0..d {
                dh[i] = dz[i] + self.lambda1 * mean[i] / n;
                dh[d + i] = dz[i] * eps[i] * 0.5 * sd[i]
                    + self.lambda1 * 0.5 * (lv[i].exp() - 1.0) / n;
            }
            self.enc.backward_params(&etrace, &dh, genc);
        }
        Ok((total, grad, var_sum / n))
    }

    /// Mean per-pixel squared reconstruction error using posterior means.
    pub fn reconstruction_mse(&self, frames: &[Observation]) -> Result<f64> {
        let mut total = 0.0;
        for f in frames {
            let r = self.decode(&self.encode(f)?)?;
            total += r
                .pixels
                .iter()
                .zip(&f.pixels)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / FRAME_PIXELS as f64;
        }
        Ok(total / frames.len().max(1) as f64)
    }

    pub fn freeze(self) -> FrozenEncoder {
        let fingerprint = fingerprint(&[self.enc.params(), self.dec.params()]);
        FrozenEncoder {
            vae: self,
            fingerprint,
        }
    }
}

pub(crate) fn fingerprint(slices: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for s in slices {
        for v in *s {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

/// Trains a VAE on `frames` with one reparameterized sample per datum per step.
pub fn train_vae(frames: &[Observation], cfg: &VaeConfig, tcfg: &TrainConfig) -> Result<(VaeEncoder, VaeReport)> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("train_vae needs at least one frame".into()));
    }
    if cfg.lambda1.is_nan() || cfg.lambda1 < 0.0 {
        return Err(Error::InvalidArgument("lambda1 must be >= 0".into()));
    }
    let mut vae = VaeEncoder::new(cfg, tcfg.seed)?;
    let d = cfg.latent_dim;
    let mut collapse_warnings = 0;
    let report = train(&mut vae, frames.len(), tcfg, |vae, batch, rng| {
        let xs: Vec<&[f64]> = batch.iter().map(|&i| frames[i].pixels.as_slice()).collect();
        let noise: Vec<Vec<f64>> = batch
            .iter()
            .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        let (loss, grad, mean_var) = vae.loss_grad(&xs, &noise)?;
        if mean_var < 1e-6 {
            collapse_warnings += 1;
        }
        Ok((loss, grad))
    })?;
    Ok((
        vae,
        VaeReport {
            train: report,
            collapse_warnings,
        },
    ))
}

/// A trained VAE whose parameters may no longer change.
///
/// The fingerprint ties downstream artifacts (latent targets, forecasters) to
/// the exact encoder that produced their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenEncoder {
    vae: VaeEncoder,
    fingerprint: String,
}

impl FrozenEncoder {
    pub fn vae(&self) -> &VaeEncoder {
        &self.vae
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn latent_dim(&self) -> usize {
        self.vae.latent_dim
    }

    pub fn encode(&self, y: &Observation) -> Result<Vec<f64>> {
        self.vae.encode(y)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Observation> {
        self.vae.decode(z)
    }

    /// Unfreezes for further training; downstream artifacts keyed to the old
    /// fingerprint will be rejected.
    pub fn thaw(self) -> VaeEncoder {
        self.vae
    }
}
