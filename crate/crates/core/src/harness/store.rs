//! On-disk layout of a run and (de)serialization of its artifacts.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Split;
use super::tensor::{TensorData, TensorFile};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet, TrainReport};
use crate::predictors::{
    Evaluator, ForecasterShape, FrozenEncoder, InputKind, LatentForecaster, MonoInput, MonolithicPredictor,
    VaeEncoder,
};
use crate::sim::{ObservationActionDataset, Trajectory, FRAME_HEIGHT, FRAME_WIDTH};

/// Pipelines that can be trained and evaluated per horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Pipeline {
    Mono,
    Composite,
    CompositeImage,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Mono, Pipeline::Composite, Pipeline::CompositeImage];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Mono => "mono",
            Pipeline::Composite => "composite",
            Pipeline::CompositeImage => "composite_image",
        }
    }
}

/// Paths of every artifact under a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data().join("manifest.json")
    }

    pub fn split_dir(&self, s: Split) -> PathBuf {
        self.data().join(s.name())
    }

    pub fn trajectories(&self, s: Split) -> PathBuf {
        self.split_dir(s).join("trajectories.json")
    }

    pub fn frames(&self, s: Split) -> PathBuf {
        self.split_dir(s).join("frames.ctsr")
    }

    pub fn dataset(&self, s: Split, k: usize) -> PathBuf {
        self.split_dir(s).join(format!("dataset_k{k}.json"))
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    /// Model stem; the tensor is `<stem>.ctsr`, the sidecar `<stem>.json`.
    pub fn model(&self, name: &str) -> PathBuf {
        self.models().join(name)
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn result(&self, name: &str) -> PathBuf {
        self.results().join(name)
    }
}

pub fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Reads JSON; a missing file is reported as a missing artifact produced by
/// `command`.
pub fn read_json<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let bytes = read_artifact(path, command)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn read_artifact(path: &Path, command: &str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            command: command.to_string(),
        });
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

pub fn write_trajectories(layout: &Layout, s: Split, trajs: &[Trajectory], frames: bool) -> Result<()> {
    write_json(&layout.trajectories(s), &trajs)?;
    if frames {
        let total: usize = trajs.iter().map(|t| t.len()).sum();
        let mut bytes = Vec::with_capacity(total * FRAME_HEIGHT * FRAME_WIDTH);
        for t in trajs {
            for o in t.observations() {
                bytes.extend(o.to_bytes());
            }
        }
        let dims = vec![total as u32, FRAME_HEIGHT as u32, FRAME_WIDTH as u32];
        let path = layout.frames(s);
        ensure_dir(&layout.split_dir(s))?;
        TensorFile::new(dims, TensorData::U8(bytes))?.write(&path)?;
    }
    Ok(())
}

pub fn read_trajectories(layout: &Layout, s: Split) -> Result<Vec<Trajectory>> {
    read_json(&layout.trajectories(s), "safechance generate")
}

pub fn read_dataset(layout: &Layout, s: Split, k: usize) -> Result<ObservationActionDataset> {
    read_json(&layout.dataset(s, k), "safechance generate")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vae,
    Evaluator,
    Forecaster,
    Monolithic,
}

/// JSON description stored next to a model's weight tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: ModelKind,
    pub nets: Vec<NetSpec>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub seed: u64,
    pub dataset_hash: String,
    pub config_hash: String,
    /// Fingerprint of the encoder this model consumes (or is, for the VAE).
    pub encoder_fingerprint: Option<String>,
    pub input_kind: Option<InputKind>,
    pub mono_input: Option<MonoInput>,
    pub lambda1: Option<f64>,
    pub recon_weight: Option<f64>,
    pub hidden: Option<usize>,
    pub reports: Vec<TrainReport>,
}

impl Sidecar {
    pub fn new(kind: ModelKind, nets: &[&DenseNet], seed: u64, dataset_hash: String, config_hash: String) -> Self {
        Self {
            kind,
            nets: nets
                .iter()
                .map(|n| NetSpec {
                    dims: n.dims(),
                    activations: n.activations(),
                })
                .collect(),
            m: None,
            n: None,
            k: None,
            d: None,
            seed,
            dataset_hash,
            config_hash,
            encoder_fingerprint: None,
            input_kind: None,
            mono_input: None,
            lambda1: None,
            recon_weight: None,
            hidden: None,
            reports: Vec::new(),
        }
    }
}

/// Writes the nets' parameters as one f32 tensor plus the sidecar.
pub fn save_model(stem: &Path, nets: &[&DenseNet], sidecar: &Sidecar) -> Result<()> {
    let params: Vec<f64> = nets.iter().flat_map(|n| n.params().iter().copied()).collect();
    let t = TensorFile::from_f64(vec![params.len() as u32], &params)?;
    if let Some(parent) = stem.parent() {
        ensure_dir(parent)?;
    }
    t.write(&stem.with_extension("ctsr"))?;
    write_json(&stem.with_extension("json"), sidecar)
}

pub fn load_model(stem: &Path, command: &str) -> Result<(Vec<DenseNet>, Sidecar)> {
    let sidecar: Sidecar = read_json(&stem.with_extension("json"), command)?;
    let bytes = read_artifact(&stem.with_extension("ctsr"), command)?;
    let params = TensorFile::from_bytes(&bytes)?.to_f64();
    let mut nets = Vec::with_capacity(sidecar.nets.len());
    let mut offset = 0;
    for spec in &sidecar.nets {
        let mut net = DenseNet::zeros(&spec.dims, &spec.activations)?;
        let count = net.param_count();
        let slice = params
            .get(offset..offset + count)
            .ok_or_else(|| Error::Format(format!("{} holds too few parameters", stem.display())))?;
        net.set_params(slice.to_vec())?;
        offset += count;
        nets.push(net);
    }
    if offset != params.len() {
        return Err(Error::Format(format!("{} holds extra parameters", stem.display())));
    }
    Ok((nets, sidecar))
}

fn field<T>(v: Option<T>, stem: &Path, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Format(format!("{} sidecar lacks `{name}`", stem.display())))
}

fn expect_kind(sidecar: &Sidecar, kind: ModelKind, stem: &Path) -> Result<()> {
    if sidecar.kind != kind {
        return Err(Error::Format(format!(
            "{} holds a {:?}, expected {kind:?}",
            stem.display(),
            sidecar.kind
        )));
    }
    Ok(())
}

pub fn load_vae(stem: &Path, command: &str) -> Result<(FrozenEncoder, Sidecar)> {
    let (mut nets, sc) = load_model(stem, command)?;
    expect_kind(&sc, ModelKind::Vae, stem)?;
    if nets.len() != 2 {
        return Err(Error::Format("a VAE has an encoder and a decoder".into()));
    }
    let dec = nets.pop().expect("two nets");
    let enc = nets.pop().expect("two nets");
    let vae = VaeEncoder {
        enc,
        dec,
        latent_dim: field(sc.d, stem, "d")?,
        lambda1: field(sc.lambda1, stem, "lambda1")?,
        recon_weight: field(sc.recon_weight, stem, "recon_weight")?,
    };
    Ok((vae.freeze(), sc))
}

pub fn load_evaluator(stem: &Path, command: &str) -> Result<(Evaluator, Sidecar)> {
    let (mut nets, sc) = load_model(stem, command)?;
    expect_kind(&sc, ModelKind::Evaluator, stem)?;
    let net = nets.pop().ok_or_else(|| Error::Format("empty evaluator".into()))?;
    let input_kind = field(sc.input_kind, stem, "input_kind")?;
    Ok((Evaluator { net, input_kind }, sc))
}

pub fn load_forecaster(stem: &Path, command: &str) -> Result<(LatentForecaster, Sidecar)> {
    let (mut nets, sc) = load_model(stem, command)?;
    expect_kind(&sc, ModelKind::Forecaster, stem)?;
    let net = nets.pop().ok_or_else(|| Error::Format("empty forecaster".into()))?;
    let shape = ForecasterShape {
        m: field(sc.m, stem, "m")?,
        n: field(sc.n, stem, "n")?,
        k: field(sc.k, stem, "k")?,
        latent_dim: field(sc.d, stem, "d")?,
        hidden: field(sc.hidden, stem, "hidden")?,
    };
    let encoder_fingerprint = field(sc.encoder_fingerprint.clone(), stem, "encoder_fingerprint")?;
    Ok((
        LatentForecaster {
            net,
            shape,
            encoder_fingerprint,
        },
        sc,
    ))
}

pub fn load_monolithic(stem: &Path, command: &str) -> Result<(MonolithicPredictor, Sidecar)> {
    let (mut nets, sc) = load_model(stem, command)?;
    expect_kind(&sc, ModelKind::Monolithic, stem)?;
    let head = nets.pop().ok_or_else(|| Error::Format("empty monolithic head".into()))?;
    let p = MonolithicPredictor {
        head,
        input: field(sc.mono_input, stem, "mono_input")?,
        m: field(sc.m, stem, "m")?,
        k: field(sc.k, stem, "k")?,
        encoder_fingerprint: sc.encoder_fingerprint.clone(),
    };
    Ok((p, sc))
}
