//! Training inputs assembled straight from trajectories.

use super::forecaster::{forecaster_input, LatentWindowSet};
use super::monolithic::{window_features, MonoInput};
use super::vae::FrozenEncoder;
use crate::error::{Error, Result};
use crate::sim::{is_safe, ObservationActionDataset, Trajectory};

/// Posterior means of every state frame, per trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCache {
    pub latents: Vec<Vec<Vec<f64>>>,
    pub encoder_fingerprint: String,
}

impl LatentCache {
    pub fn build(enc: &FrozenEncoder, trajs: &[Trajectory]) -> Result<Self> {
        let latents = trajs
            .iter()
            .map(|t| t.observations().map(|o| enc.encode(&o)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            latents,
            encoder_fingerprint: enc.fingerprint().to_string(),
        })
    }

    fn check(&self, trajs: &[Trajectory]) -> Result<()> {
        if self.latents.len() != trajs.len() {
            return Err(Error::DimensionMismatch {
                stage: "latent cache trajectories".into(),
                expected: trajs.len(),
                got: self.latents.len(),
            });
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.latents
            .iter()
            .flatten()
            .next()
            .map_or(0, |z| z.len())
    }

    /// Encoder input window of sample `idx`: `m` latents with action signs.
    pub fn window_input(&self, trajs: &[Trajectory], ds: &ObservationActionDataset, idx: usize) -> Vec<f64> {
        let s = ds.samples[idx];
        let t = &trajs[s.trajectory];
        let range = s.start(ds.m)..=s.end;
        let latents = &self.latents[s.trajectory][range.clone()];
        let actions: Vec<f64> = range.map(|i| t.actions[i].sign()).collect();
        forecaster_input(latents, &actions)
    }
}

/// Forecaster training pairs: window latents → the `n` latents ending at `end + k`.
pub fn latent_windows(
    cache: &LatentCache,
    trajs: &[Trajectory],
    ds: &ObservationActionDataset,
    n: usize,
) -> Result<LatentWindowSet> {
    cache.check(trajs)?;
    if n == 0 || n > ds.k {
        return Err(Error::InvalidArgument(format!(
            "output window n={n} must satisfy 1 <= n <= k={}",
            ds.k
        )));
    }
    let mut inputs = Vec::with_capacity(ds.len());
    let mut targets = Vec::with_capacity(ds.len());
    for (idx, s) in ds.samples.iter().enumerate() {
        inputs.push(cache.window_input(trajs, ds, idx));
        let last = s.end + ds.k;
        let target: Vec<f64> = cache.latents[s.trajectory][last + 1 - n..=last]
            .iter()
            .flatten()
            .copied()
            .collect();
        targets.push(target);
    }
    Ok(LatentWindowSet {
        inputs,
        targets,
        m: ds.m,
        n,
        k: ds.k,
        latent_dim: cache.latent_dim(),
        encoder_fingerprint: cache.encoder_fingerprint.clone(),
    })
}

/// Monolithic inputs for every sample of `ds`.
pub fn mono_inputs(
    input: MonoInput,
    cache: Option<&LatentCache>,
    trajs: &[Trajectory],
    ds: &ObservationActionDataset,
) -> Result<Vec<Vec<f64>>> {
    match input {
        MonoInput::Latent => {
            let cache = cache.ok_or_else(|| {
                Error::StageOrder("latent monolithic inputs need a latent cache".into())
            })?;
            cache.check(trajs)?;
            Ok((0..ds.len()).map(|i| cache.window_input(trajs, ds, i)).collect())
        }
        MonoInput::RawPixels => Ok((0..ds.len())
            .map(|i| {
                let w = ds.window(trajs, i);
                let parts: Vec<&[f64]> = w.iter().map(|(o, _)| o.pixels.as_slice()).collect();
                let actions: Vec<f64> = w.iter().map(|(_, a)| a.sign()).collect();
                window_features(&parts, &actions)
            })
            .collect()),
    }
}

/// Every state of every trajectory as `(trajectory, index, safe)`.
pub fn state_index(trajs: &[Trajectory]) -> Vec<(usize, usize, bool)> {
    trajs
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| {
            t.states
                .iter()
                .enumerate()
                .map(move |(i, s)| (ti, i, is_safe(s)))
        })
        .collect()
}
