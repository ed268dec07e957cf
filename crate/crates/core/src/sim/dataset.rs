use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{is_safe, Action, Observation, Trajectory};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One window, referenced by trajectory and end index rather than copied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSample {
    pub trajectory: usize,
    /// Index of the last (frame, action) pair in the window.
    pub end: usize,
    pub label: bool,
}

impl WindowSample {
    pub fn start(&self, m: usize) -> usize {
        self.end + 1 - m
    }
}

/// Windows of `m` (frame, action) pairs labeled with safety `k` steps after
/// the window end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationActionDataset {
    pub samples: Vec<WindowSample>,
    pub m: usize,
    pub k: usize,
}

impl ObservationActionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(safe, unsafe)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let safe = self.samples.iter().filter(|s| s.label).count();
        (safe, self.samples.len() - safe)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Materializes the frames and actions of sample `idx`.
    pub fn window(&self, trajs: &[Trajectory], idx: usize) -> Vec<(Observation, Action)> {
        let s = self.samples[idx];
        let t = &trajs[s.trajectory];
        (s.start(self.m)..=s.end)
            .map(|i| (t.observation(i), t.actions[i]))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            m: self.m,
            k: self.k,
        }
    }

    /// Uniform subsample without replacement, keeping at most `cap` samples.
    pub fn cap(&self, cap: usize, rng: &mut Rng) -> Self {
        if self.samples.len() <= cap {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.samples.len()).collect();
        idx.shuffle(rng);
        idx.truncate(cap);
        idx.sort_unstable();
        self.subset(&idx)
    }
}

pub fn build_dataset(trajs: &[Trajectory], m: usize, k: usize) -> Result<ObservationActionDataset> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "window m and horizon k must be >= 1 (got m={m}, k={k})"
        )));
    }
    let mut samples = Vec::new();
    for (ti, t) in trajs.iter().enumerate() {
        let len = t.len();
        if len < m + k {
            continue;
        }
        for end in (m - 1)..=(len - 1 - k) {
            samples.push(WindowSample {
                trajectory: ti,
                end,
                label: is_safe(&t.states[end + k]),
            });
        }
    }
    Ok(ObservationActionDataset { samples, m, k })
}

/// Oversamples the minority class with replacement up to the majority count,
/// then shuffles.
pub fn rebalance(ds: &ObservationActionDataset, rng: &mut Rng) -> Result<ObservationActionDataset> {
    let (safe, unsafe_): (Vec<&WindowSample>, Vec<&WindowSample>) =
        ds.samples.iter().partition(|s| s.label);
    if safe.is_empty() {
        return Err(Error::SingleClass { missing: "safe" });
    }
    if unsafe_.is_empty() {
        return Err(Error::SingleClass { missing: "unsafe" });
    }
    let (major, minor) = if safe.len() >= unsafe_.len() {
        (safe, unsafe_)
    } else {
        (unsafe_, safe)
    };
    let mut samples: Vec<WindowSample> = major.iter().map(|s| **s).collect();
    samples.extend(minor.iter().map(|s| **s));
    for _ in minor.len()..major.len() {
        samples.push(*minor[rng.random_range(0..minor.len())]);
    }
    samples.shuffle(rng);
    Ok(ObservationActionDataset {
        samples,
        m: ds.m,
        k: ds.k,
    })
}
