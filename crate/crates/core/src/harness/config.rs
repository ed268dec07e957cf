use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::ResampleConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::predictors::{MonoInput, VaeConfig};
use crate::rng::substream;
use crate::sim::{ControllerConfig, PhysicsParams};
use crate::uda::{AdaptationConfig, ShiftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Calibration,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Calibration, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Calibration => "calibration",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub calibration: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 600,
            calibration: 600,
            validation: 600,
            test: 600,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, s: Split) -> usize {
        match s {
            Split::Train => self.train,
            Split::Calibration => self.calibration,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub model: VaeConfig,
    /// Training frames drawn uniformly from the train split.
    pub frames: usize,
    pub train: TrainConfig,
}

impl Default for VaeSection {
    fn default() -> Self {
        Self {
            model: VaeConfig::default(),
            frames: 4000,
            train: TrainConfig {
                max_epochs: 30,
                batch_size: 32,
                ..TrainConfig::default()
            },
        }
    }
}

fn head_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 40,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub hidden: usize,
    /// Cap on training states after 1:1 rebalancing.
    pub samples: usize,
    pub train: TrainConfig,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        Self {
            hidden: 32,
            samples: 6000,
            train: head_train(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterSection {
    pub hidden: usize,
    pub samples: usize,
    pub train: TrainConfig,
}

impl Default for ForecasterSection {
    fn default() -> Self {
        Self {
            hidden: 64,
            samples: 20_000,
            train: TrainConfig {
                max_epochs: 60,
                ..head_train()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonolithicSection {
    pub input: MonoInput,
    pub hidden: usize,
    /// Cap on training windows after 1:1 rebalancing.
    pub samples: usize,
    pub train: TrainConfig,
}

impl Default for MonolithicSection {
    fn default() -> Self {
        Self {
            input: MonoInput::Latent,
            hidden: 32,
            samples: 8000,
            train: head_train(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoSection {
    pub enabled: bool,
    pub adaptation: AdaptationConfig,
    pub shift: ShiftConfig,
}

impl Default for MemoSection {
    fn default() -> Self {
        Self {
            enabled: true,
            adaptation: AdaptationConfig::default(),
            shift: ShiftConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalSection {
    pub q: usize,
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    /// Fresh resamples per test bin when measuring coverage.
    pub trials: usize,
}

impl Default for ConformalSection {
    fn default() -> Self {
        Self {
            q: 10,
            m: 200,
            n: 100,
            alpha: 0.05,
            trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub physics: PhysicsParams,
    pub controller: ControllerConfig,
    pub trajectories: SplitCounts,
    pub steps: usize,
    /// Window length.
    pub m: usize,
    /// Forecast window length.
    pub n: usize,
    pub horizons: Vec<usize>,
    pub vae: VaeSection,
    pub evaluator: EvaluatorSection,
    pub forecaster: ForecasterSection,
    pub monolithic: MonolithicSection,
    pub memo: MemoSection,
    /// ECE bin count.
    pub calibration_q: usize,
    pub conformal: ConformalSection,
    /// Uniform cap on evaluation windows per split and horizon.
    pub eval_samples: usize,
    /// Write per-split frame tensors alongside the trajectories.
    pub write_frames: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            physics: PhysicsParams::default(),
            controller: ControllerConfig::default(),
            trajectories: SplitCounts::default(),
            steps: 200,
            m: 8,
            n: 1,
            horizons: vec![5, 10, 20, 30],
            vae: VaeSection::default(),
            evaluator: EvaluatorSection::default(),
            forecaster: ForecasterSection::default(),
            monolithic: MonolithicSection::default(),
            memo: MemoSection::default(),
            calibration_q: 10,
            conformal: ConformalSection::default(),
            eval_samples: 20_000,
            write_frames: true,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Trajectory seeds of split `s` start at `seed * SEED_BLOCK + s * SPLIT_BLOCK`.
pub const SPLIT_BLOCK: u64 = 1 << 24;
pub const SEED_BLOCK: u64 = 4 * SPLIT_BLOCK;

/// Stream ids for per-stage seeds derived from the run seed.
pub mod stage {
    pub const VAE: u64 = 101;
    pub const LATENT_EVALUATOR: u64 = 102;
    pub const IMAGE_EVALUATOR: u64 = 103;
    pub const FORECASTER: u64 = 104;
    pub const MONOLITHIC: u64 = 105;
    pub const SAMPLING: u64 = 106;
    pub const MEMO: u64 = 107;
    pub const CONFORMAL: u64 = 108;
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("horizons must be a non-empty list of positive steps".into());
        }
        if self.n == 0 || self.horizons.iter().any(|&k| self.n > k) {
            return bad(format!("n={} must satisfy 1 <= n <= every horizon", self.n));
        }
        if self.steps <= self.m + self.horizons.iter().max().copied().unwrap_or(0) {
            return bad("steps too short for the window and the largest horizon".into());
        }
        for s in Split::ALL {
            let c = self.trajectories.get(s);
            if c == 0 || c as u64 >= SPLIT_BLOCK {
                return bad(format!("{} trajectory count {c} out of range", s.name()));
            }
        }
        if self.seed >= u64::MAX / SEED_BLOCK {
            return bad("seed too large for disjoint split ranges".into());
        }
        if self.calibration_q == 0 || self.conformal.q == 0 || self.conformal.trials == 0 {
            return bad("bin counts and trial counts must be >= 1".into());
        }
        if self.eval_samples == 0 {
            return bad("eval_samples must be >= 1".into());
        }
        self.physics.validate().map_err(|e| Error::Config(e.to_string()))?;
        for t in [
            &self.vae.train,
            &self.evaluator.train,
            &self.forecaster.train,
            &self.monolithic.train,
        ] {
            t.validate()?;
        }
        self.memo.adaptation.validate()?;
        self.resample().validate()?;
        Ok(())
    }

    /// Hash of everything but the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// First trajectory seed of a split; the split owns
    /// `[start, start + count)`.
    pub fn split_seed_start(&self, s: Split) -> u64 {
        self.seed * SEED_BLOCK + s.index() * SPLIT_BLOCK
    }

    pub fn stage_seed(&self, stream: u64) -> u64 {
        substream(self.seed, stream).next_u64()
    }

    pub fn resample(&self) -> ResampleConfig {
        ResampleConfig {
            m: self.conformal.m,
            n: self.conformal.n,
            alpha: self.conformal.alpha,
            seed: self.stage_seed(stage::CONFORMAL),
        }
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_json_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "horizons": [5]}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.m, 8);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
    }

    #[test]
    fn split_ranges_disjoint() {
        let c = RunConfig::default();
        let starts: Vec<u64> = Split::ALL.iter().map(|&s| c.split_seed_start(s)).collect();
        for w in starts.windows(2) {
            assert!(w[0] + c.trajectories.train as u64 <= w[1]);
        }
        let next = RunConfig { seed: 1, ..c.clone() };
        assert!(starts[3] + (c.trajectories.test as u64) <= next.split_seed_start(Split::Train));
    }

    #[test]
    fn hash_ignores_out_dir() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 9, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn invalid_configs() {
        let c = RunConfig {
            horizons: vec![],
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig {
            n: 40,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
