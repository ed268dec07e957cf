use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{forecast_window, EncoderBound, Forecast, LatentCodec};
use crate::rng::Rng;
use crate::sim::{ObservationActionDataset, Observation, Trajectory, WindowSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Added to every pixel after the contrast change.
    pub brightness: f64,
    /// Gain about mid-gray; 1 keeps contrast.
    pub contrast: f64,
    pub max_samples: usize,
    /// Target share of the minority class after subsampling the majority.
    pub minority_fraction: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            brightness: 0.0,
            contrast: 1.0,
            max_samples: 2000,
            minority_fraction: 0.5,
        }
    }
}

/// Smallest minority share a shifted set may have.
pub const MIN_MINORITY: f64 = 0.2;

/// Frames labeled with the true safety of the state they depict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFrames {
    pub frames: Vec<Observation>,
    pub labels: Vec<bool>,
    pub sources: Vec<WindowSample>,
}

impl LabeledFrames {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn minority_fraction(&self) -> f64 {
        let safe = self.labels.iter().filter(|&&l| l).count();
        safe.min(self.labels.len() - safe) as f64 / self.labels.len().max(1) as f64
    }
}

pub fn photometric(y: &Observation, brightness: f64, contrast: f64) -> Observation {
    Observation::from_pixels(
        y.pixels
            .iter()
            .map(|p| (contrast * (p - 0.5) + 0.5 + brightness).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Picks sample indices of `ds` with the requested minority share, at most
/// `max` in total, in ascending order.
pub fn pick_balanced(ds: &ObservationActionDataset, minority_fraction: f64, max: usize, rng: &mut Rng) -> Vec<usize> {
    let (mut safe, mut unsafe_): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| ds.samples[i].label);
    safe.shuffle(rng);
    unsafe_.shuffle(rng);
    let (minority, majority) = if safe.len() <= unsafe_.len() {
        (&mut safe, &mut unsafe_)
    } else {
        (&mut unsafe_, &mut safe)
    };
    let f = minority_fraction.clamp(0.0, 0.5);
    let n_min = minority.len().min((max as f64 * f).round() as usize);
    let n_maj = if f > 0.0 {
        ((n_min as f64) * (1.0 - f) / f).round() as usize
    } else {
        max
    };
    let n_maj = n_maj.min(majority.len()).min(max - n_min);
    let mut idx: Vec<usize> = minority[..n_min].iter().chain(&majority[..n_maj]).copied().collect();
    idx.sort_unstable();
    idx
}

/// Long-horizon decoded forecasts, optionally photometrically shifted,
/// labeled with the ground-truth safety at the horizon.
pub fn make_shifted_set<C, F>(
    enc: &C,
    f: &F,
    trajs: &[Trajectory],
    ds: &ObservationActionDataset,
    cfg: &ShiftConfig,
    rng: &mut Rng,
) -> Result<LabeledFrames>
where
    C: LatentCodec,
    F: Forecast + EncoderBound,
{
    let idx = pick_balanced(ds, cfg.minority_fraction, cfg.max_samples, rng);
    let mut out = LabeledFrames {
        frames: Vec::with_capacity(idx.len()),
        labels: Vec::with_capacity(idx.len()),
        sources: Vec::with_capacity(idx.len()),
    };
    for i in idx {
        let forecast = forecast_window(enc, f, &ds.window(trajs, i))?;
        let last = forecast
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty forecast".into()))?;
        let decoded = enc.decode(last)?;
        out.frames.push(photometric(&decoded, cfg.brightness, cfg.contrast));
        out.labels.push(ds.samples[i].label);
        out.sources.push(ds.samples[i]);
    }
    if out.minority_fraction() < MIN_MINORITY {
        return Err(Error::InvalidArgument(format!(
            "shifted set minority share {:.3} is below {MIN_MINORITY}",
            out.minority_fraction()
        )));
    }
    Ok(out)
}

/// True frames at the horizon of each picked sample; the in-distribution
/// counterpart of [`make_shifted_set`].
pub fn make_normal_set(
    trajs: &[Trajectory],
    ds: &ObservationActionDataset,
    cfg: &ShiftConfig,
    rng: &mut Rng,
) -> LabeledFrames {
    let idx = pick_balanced(ds, cfg.minority_fraction, cfg.max_samples, rng);
    let mut out = LabeledFrames {
        frames: Vec::with_capacity(idx.len()),
        labels: Vec::with_capacity(idx.len()),
        sources: Vec::with_capacity(idx.len()),
    };
    for i in idx {
        let s = ds.samples[i];
        out.frames.push(trajs[s.trajectory].observation(s.end + ds.k));
        out.labels.push(s.label);
        out.sources.push(s);
    }
    out
}
