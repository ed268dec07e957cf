//! The experiment commands. Each reads its inputs from the run directory
//! and writes its outputs back, so commands can run in separate processes.

use std::collections::BTreeMap;
use std::io::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{stage, RunConfig, Split};
use super::metrics::Confusion;
use super::report::{write_report, MetricsRow};
use super::store::{
    file_hash, load_evaluator, load_forecaster, load_monolithic, load_vae, read_dataset, read_json,
    read_trajectories, save_model, write_bytes, write_json, write_trajectories, Layout, ModelKind, Pipeline,
    Sidecar,
};
use super::tensor::TensorFile;
use crate::calibration::{
    brier, fit, reliability, select_held_out, BinScheme, CalKind, FittedCalibrator, ScoredSample,
};
use crate::conformal::{adaptive_bin, bounds_for_all_bins, coverage_eval, ConformalBoundSet};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::predictors::{
    evaluate_latents, latent_windows, mono_inputs, state_index, train_evaluator, train_forecaster,
    train_monolithic, train_vae, Evaluator, FrozenEncoder, InputKind, LatentCache, LatentForecaster,
    MonolithicPredictor, Prediction,
};
use crate::rng::{substream, Rng};
use crate::sim::{
    build_dataset, has_violation, rebalance, simulate, ObservationActionDataset, Observation, Trajectory,
    WindowSample,
};
use crate::uda::{make_normal_set, make_shifted_set, AdaptEvent, Adapter, AdaptationConfig, LabeledFrames};

const GENERATE: &str = "safechance generate";

fn train_cmd(p: Pipeline, k: usize) -> String {
    format!("safechance train --pipeline {} --k {k}", p.name())
}

fn calibrate_cmd(p: Pipeline, k: usize) -> String {
    format!("safechance calibrate --pipeline {} --k {k}", p.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonCounts {
    pub k: usize,
    pub samples: usize,
    pub safe: usize,
    pub unsafe_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split: Split,
    /// Trajectory seeds `[seed_start, seed_end)`.
    pub seed_start: u64,
    pub seed_end: u64,
    pub trajectories: usize,
    pub states: usize,
    pub violating_trajectories: usize,
    pub horizons: Vec<HorizonCounts>,
    pub trajectories_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub m: usize,
    pub splits: Vec<SplitManifest>,
}

/// Sidecar of a split's latent tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LatentIndex {
    encoder_fingerprint: String,
    lengths: Vec<usize>,
}

/// Everything a command needs: the validated config and where to put files.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: RunConfig,
    pub layout: Layout,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.out_dir.clone());
        Ok(Self { cfg, layout })
    }

    fn check_horizon(&self, k: usize) -> Result<()> {
        if !self.cfg.horizons.contains(&k) {
            return Err(Error::Config(format!(
                "horizon k={k} is not among the configured horizons {:?}",
                self.cfg.horizons
            )));
        }
        Ok(())
    }

    /// Independent sampling stream per purpose.
    fn sampling_rng(&self, tag: &str) -> Rng {
        let digest = Sha256::digest(tag.as_bytes());
        let stream = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        substream(self.cfg.stage_seed(stage::SAMPLING), stream)
    }

    fn train_cfg(&self, base: &TrainConfig, stream: u64, k: usize) -> TrainConfig {
        TrainConfig {
            seed: self.cfg.stage_seed(stream).wrapping_add(k as u64),
            ..*base
        }
    }

    fn sidecar(&self, kind: ModelKind, nets: &[&crate::nn::DenseNet], seed: u64, dataset_hash: String) -> Sidecar {
        Sidecar::new(kind, nets, seed, dataset_hash, self.cfg.hash())
    }

    // ---------------------------------------------------------------- generate

    pub fn generate(&self) -> Result<Manifest> {
        let c = &self.cfg;
        let mut splits = Vec::with_capacity(4);
        for s in Split::ALL {
            let start = c.split_seed_start(s);
            let count = c.trajectories.get(s);
            let trajs = (start..start + count as u64)
                .map(|seed| simulate(seed, c.steps, &c.controller, &c.physics))
                .collect::<Result<Vec<_>>>()?;
            write_trajectories(&self.layout, s, &trajs, c.write_frames)?;
            let mut horizons = Vec::with_capacity(c.horizons.len());
            for &k in &c.horizons {
                let ds = build_dataset(&trajs, c.m, k)?;
                write_json(&self.layout.dataset(s, k), &ds)?;
                let (safe, unsafe_) = ds.class_counts();
                horizons.push(HorizonCounts {
                    k,
                    samples: ds.len(),
                    safe,
                    unsafe_,
                });
            }
            splits.push(SplitManifest {
                split: s,
                seed_start: start,
                seed_end: start + count as u64,
                trajectories: trajs.len(),
                states: trajs.iter().map(|t| t.len()).sum(),
                violating_trajectories: trajs.iter().filter(|t| has_violation(t)).count(),
                horizons,
                trajectories_hash: file_hash(&self.layout.trajectories(s))?,
            });
        }
        let manifest = Manifest {
            config_hash: c.hash(),
            seed: c.seed,
            m: c.m,
            splits,
        };
        write_json(&self.layout.manifest(), &manifest)?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let m: Manifest = read_json(&self.layout.manifest(), GENERATE)?;
        if m.config_hash != self.cfg.hash() {
            return Err(Error::StageOrder(format!(
                "data in {} was generated with config {}, current config is {}; rerun `{GENERATE}`",
                self.layout.root.display(),
                m.config_hash,
                self.cfg.hash()
            )));
        }
        Ok(m)
    }

    pub fn trajectories(&self, s: Split) -> Result<Vec<Trajectory>> {
        self.manifest()?;
        read_trajectories(&self.layout, s)
    }

    // ------------------------------------------------------------------ models

    fn vae_stem(&self) -> std::path::PathBuf {
        self.layout.model("vae")
    }

    /// Loads the VAE, training it first when absent.
    pub fn ensure_vae(&self) -> Result<FrozenEncoder> {
        if self.vae_stem().with_extension("json").exists() {
            return Ok(load_vae(&self.vae_stem(), "safechance train")?.0);
        }
        let trajs = self.trajectories(Split::Train)?;
        let states = state_dataset(&trajs);
        let mut rng = self.sampling_rng("vae/frames");
        let picked = states.cap(self.cfg.vae.frames, &mut rng);
        let frames: Vec<Observation> = picked
            .samples
            .iter()
            .map(|s| trajs[s.trajectory].observation(s.end))
            .collect();
        let tcfg = self.train_cfg(&self.cfg.vae.train, stage::VAE, 0);
        let (mut vae, report) = train_vae(&frames, &self.cfg.vae.model, &tcfg)?;
        vae.enc.round_to_f32();
        vae.dec.round_to_f32();
        let mut sc = self.sidecar(ModelKind::Vae, &[&vae.enc, &vae.dec], tcfg.seed, sample_hash(&picked.samples));
        sc.d = Some(vae.latent_dim);
        sc.lambda1 = Some(vae.lambda1);
        sc.recon_weight = Some(vae.recon_weight);
        sc.reports = vec![report.train];
        let frozen = vae.freeze();
        sc.encoder_fingerprint = Some(frozen.fingerprint().to_string());
        save_model(&self.vae_stem(), &[&frozen.vae().enc, &frozen.vae().dec], &sc)?;
        Ok(frozen)
    }

    /// Posterior means of every frame of a split, computed once per encoder
    /// and stored as f32.
    pub fn latents(&self, enc: &FrozenEncoder, s: Split, trajs: &[Trajectory]) -> Result<LatentCache> {
        let tensor = self.layout.split_dir(s).join("latents.ctsr");
        let index = self.layout.split_dir(s).join("latents.json");
        let lengths: Vec<usize> = trajs.iter().map(|t| t.len()).collect();
        if index.exists() && tensor.exists() {
            let idx: LatentIndex = read_json(&index, GENERATE)?;
            if idx.encoder_fingerprint == enc.fingerprint() && idx.lengths == lengths {
                let t = TensorFile::read(&tensor)?;
                let d = enc.latent_dim();
                let flat = t.to_f64();
                let mut rows = flat.chunks(d);
                let latents = lengths
                    .iter()
                    .map(|&n| rows.by_ref().take(n).map(|r| r.to_vec()).collect())
                    .collect();
                return Ok(LatentCache {
                    latents,
                    encoder_fingerprint: enc.fingerprint().to_string(),
                });
            }
        }
        let mut cache = LatentCache::build(enc, trajs)?;
        for z in cache.latents.iter_mut().flatten().flatten() {
            *z = f64::from(*z as f32);
        }
        let flat: Vec<f64> = cache.latents.iter().flatten().flatten().copied().collect();
        let rows: usize = lengths.iter().sum();
        TensorFile::from_f64(vec![rows as u32, enc.latent_dim() as u32], &flat)?.write(&tensor)?;
        write_json(
            &index,
            &LatentIndex {
                encoder_fingerprint: enc.fingerprint().to_string(),
                lengths,
            },
        )?;
        Ok(cache)
    }

    fn evaluator_stem(&self, kind: InputKind) -> std::path::PathBuf {
        match kind {
            InputKind::Image => self.layout.model("evaluator_image"),
            _ => self.layout.model("evaluator_latent"),
        }
    }

    fn forecaster_stem(&self, k: usize) -> std::path::PathBuf {
        self.layout.model(&format!("forecaster_k{k}"))
    }

    fn mono_stem(&self, k: usize) -> std::path::PathBuf {
        self.layout.model(&format!("mono_k{k}"))
    }

    fn ensure_evaluator(&self, enc: &FrozenEncoder, kind: InputKind) -> Result<()> {
        let stem = self.evaluator_stem(kind);
        if stem.with_extension("json").exists() {
            return Ok(());
        }
        let trajs = self.trajectories(Split::Train)?;
        let mut rng = self.sampling_rng(&format!("evaluator/{kind:?}"));
        let ds = rebalance(&state_dataset(&trajs), &mut rng)?.cap(self.cfg.evaluator.samples, &mut rng);
        let inputs: Vec<Vec<f64>> = match kind {
            InputKind::Image => ds
                .samples
                .iter()
                .map(|s| trajs[s.trajectory].observation(s.end).pixels)
                .collect(),
            _ => {
                let cache = self.latents(enc, Split::Train, &trajs)?;
                ds.samples
                    .iter()
                    .map(|s| cache.latents[s.trajectory][s.end].clone())
                    .collect()
            }
        };
        let stream = if kind == InputKind::Image {
            stage::IMAGE_EVALUATOR
        } else {
            stage::LATENT_EVALUATOR
        };
        let tcfg = self.train_cfg(&self.cfg.evaluator.train, stream, 0);
        let kind = if kind == InputKind::Image { kind } else { InputKind::Latent };
        let (mut ev, report) = train_evaluator(&inputs, &ds.labels(), kind, self.cfg.evaluator.hidden, &tcfg)?;
        ev.net.round_to_f32();
        let mut sc = self.sidecar(ModelKind::Evaluator, &[&ev.net], tcfg.seed, sample_hash(&ds.samples));
        sc.input_kind = Some(kind);
        sc.hidden = Some(self.cfg.evaluator.hidden);
        sc.reports = vec![report];
        if kind != InputKind::Image {
            sc.encoder_fingerprint = Some(enc.fingerprint().to_string());
            sc.d = Some(enc.latent_dim());
        }
        save_model(&stem, &[&ev.net], &sc)
    }

    fn ensure_forecaster(&self, enc: &FrozenEncoder, k: usize) -> Result<()> {
        let stem = self.forecaster_stem(k);
        if stem.with_extension("json").exists() {
            return Ok(());
        }
        let trajs = self.trajectories(Split::Train)?;
        let ds = read_dataset(&self.layout, Split::Train, k)?;
        let mut rng = self.sampling_rng(&format!("forecaster/k{k}"));
        let ds = rebalance(&ds, &mut rng)?.cap(self.cfg.forecaster.samples, &mut rng);
        let cache = self.latents(enc, Split::Train, &trajs)?;
        let set = latent_windows(&cache, &trajs, &ds, self.cfg.n)?;
        let tcfg = self.train_cfg(&self.cfg.forecaster.train, stage::FORECASTER, k);
        let (mut f, report) = train_forecaster(enc, &set, self.cfg.forecaster.hidden, &tcfg)?;
        f.net.round_to_f32();
        let mut sc = self.sidecar(ModelKind::Forecaster, &[&f.net], tcfg.seed, sample_hash(&ds.samples));
        sc.m = Some(f.shape.m);
        sc.n = Some(f.shape.n);
        sc.k = Some(k);
        sc.d = Some(f.shape.latent_dim);
        sc.hidden = Some(f.shape.hidden);
        sc.encoder_fingerprint = Some(f.encoder_fingerprint.clone());
        sc.reports = vec![report];
        save_model(&stem, &[&f.net], &sc)
    }

    fn ensure_mono(&self, enc: &FrozenEncoder, k: usize) -> Result<()> {
        let stem = self.mono_stem(k);
        if stem.with_extension("json").exists() {
            return Ok(());
        }
        let sec = &self.cfg.monolithic;
        let trajs = self.trajectories(Split::Train)?;
        let ds = read_dataset(&self.layout, Split::Train, k)?;
        let mut rng = self.sampling_rng(&format!("mono/k{k}"));
        let ds = rebalance(&ds, &mut rng)?.cap(sec.samples, &mut rng);
        let cache = self.latents(enc, Split::Train, &trajs)?;
        let inputs = mono_inputs(sec.input, Some(&cache), &trajs, &ds)?;
        let tcfg = self.train_cfg(&sec.train, stage::MONOLITHIC, k);
        let fp = Some(enc.fingerprint().to_string());
        let (mut p, report) = train_monolithic(&inputs, &ds.labels(), sec.input, self.cfg.m, k, fp, sec.hidden, &tcfg)?;
        p.head.round_to_f32();
        let mut sc = self.sidecar(ModelKind::Monolithic, &[&p.head], tcfg.seed, sample_hash(&ds.samples));
        sc.m = Some(p.m);
        sc.k = Some(k);
        sc.hidden = Some(sec.hidden);
        sc.mono_input = Some(sec.input);
        sc.encoder_fingerprint = p.encoder_fingerprint.clone();
        sc.reports = vec![report];
        save_model(&stem, &[&p.head], &sc)
    }

    /// Trains every model `pipeline` needs at horizon `k`, upstream first.
    /// Existing models are kept.
    pub fn train(&self, pipeline: Pipeline, k: usize) -> Result<()> {
        self.check_horizon(k)?;
        self.manifest()?;
        let enc = self.ensure_vae()?;
        match pipeline {
            Pipeline::Mono => self.ensure_mono(&enc, k),
            Pipeline::Composite => {
                self.ensure_evaluator(&enc, InputKind::Latent)?;
                self.ensure_forecaster(&enc, k)
            }
            Pipeline::CompositeImage => {
                self.ensure_evaluator(&enc, InputKind::Image)?;
                self.ensure_forecaster(&enc, k)
            }
        }
    }

    pub fn load_pipeline(&self, pipeline: Pipeline, k: usize) -> Result<LoadedPipeline> {
        self.check_horizon(k)?;
        self.manifest()?;
        let cmd = train_cmd(pipeline, k);
        let (enc, _) = load_vae(&self.vae_stem(), &cmd)?;
        let mut artifacts = BTreeMap::new();
        artifacts.insert("vae".to_string(), file_hash(&self.vae_stem().with_extension("ctsr"))?);
        let stems: Vec<(&str, std::path::PathBuf)> = match pipeline {
            Pipeline::Mono => vec![("mono", self.mono_stem(k))],
            Pipeline::Composite => vec![
                ("forecaster", self.forecaster_stem(k)),
                ("evaluator", self.evaluator_stem(InputKind::Latent)),
            ],
            Pipeline::CompositeImage => vec![
                ("forecaster", self.forecaster_stem(k)),
                ("evaluator", self.evaluator_stem(InputKind::Image)),
            ],
        };
        let kind = match pipeline {
            Pipeline::Mono => {
                let (p, _) = load_monolithic(&stems[0].1, &cmd)?;
                PipelineModels::Mono(p)
            }
            _ => {
                let (f, _) = load_forecaster(&stems[0].1, &cmd)?;
                let (v, _) = load_evaluator(&stems[1].1, &cmd)?;
                if f.encoder_fingerprint != enc.fingerprint() {
                    return Err(Error::StageOrder(format!(
                        "forecaster k={k} was trained on another encoder; delete it and rerun `{cmd}`"
                    )));
                }
                PipelineModels::Composite { f, v }
            }
        };
        for (name, stem) in &stems {
            artifacts.insert(name.to_string(), file_hash(&stem.with_extension("ctsr"))?);
        }
        Ok(LoadedPipeline {
            pipeline,
            k,
            enc,
            models: kind,
            artifacts,
        })
    }

    /// Evaluation windows of a split: the stored dataset, capped uniformly.
    fn eval_dataset(&self, s: Split, k: usize) -> Result<ObservationActionDataset> {
        let ds = read_dataset(&self.layout, s, k)?;
        Ok(ds.cap(self.cfg.eval_samples, &mut self.sampling_rng(&format!("eval/{}/k{k}", s.name()))))
    }

    /// Pipeline predictions on the capped windows of a split.
    pub fn predictions(&self, lp: &LoadedPipeline, s: Split) -> Result<Vec<(Prediction, bool)>> {
        let trajs = self.trajectories(s)?;
        let ds = self.eval_dataset(s, lp.k)?;
        let cache = self.latents(&lp.enc, s, &trajs)?;
        let labels = ds.labels();
        let preds = match &lp.models {
            PipelineModels::Mono(p) => mono_inputs(p.input, Some(&cache), &trajs, &ds)?
                .iter()
                .map(|x| p.predict_features(x))
                .collect::<Result<Vec<_>>>()?,
            PipelineModels::Composite { f, v } => (0..ds.len())
                .map(|i| {
                    let out = f.net.forward(&cache.window_input(&trajs, &ds, i))?;
                    let forecast: Vec<Vec<f64>> = out.chunks(f.shape.latent_dim).map(|c| c.to_vec()).collect();
                    if v.input_kind == InputKind::Image {
                        let last = forecast.last().expect("forecaster emits n >= 1 latents");
                        v.predict(&lp.enc.decode(last)?.pixels)
                    } else {
                        evaluate_latents(v, &forecast)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(preds.into_iter().zip(labels).collect())
    }

    fn scored(&self, lp: &LoadedPipeline, s: Split) -> Result<Vec<ScoredSample>> {
        Ok(self
            .predictions(lp, s)?
            .iter()
            .map(|(p, y)| ScoredSample::from_logits(p.logits, *y))
            .collect())
    }

    fn base_row(&self, command: &str, lp: &LoadedPipeline, set: &str, adapted: bool, n: usize) -> MetricsRow {
        MetricsRow {
            command: command.to_string(),
            pipeline: lp.pipeline,
            k: lp.k,
            set: set.to_string(),
            adapted,
            n,
            config_hash: self.cfg.hash(),
            artifacts: lp.artifacts.clone(),
            ..MetricsRow::default()
        }
    }

    // -------------------------------------------------------------------- eval

    /// F1/FPR on the test windows; for the image pipeline also on the
    /// normal, shifted and mixed frame sets, with MEMO rows when `adapted`.
    pub fn eval(&self, pipeline: Pipeline, k: usize, adapted: bool) -> Result<Vec<MetricsRow>> {
        if adapted && pipeline != Pipeline::CompositeImage {
            return Err(Error::Config(
                "MEMO adapts the image evaluator; use --pipeline composite_image".into(),
            ));
        }
        let lp = self.load_pipeline(pipeline, k)?;
        let preds = self.predictions(&lp, Split::Test)?;
        let mut rows = vec![self.classification_row("eval", &lp, "test", false, &preds)?];
        if pipeline == Pipeline::CompositeImage && self.cfg.memo.enabled {
            rows.extend(self.memo_rows(&lp, adapted)?);
        }
        let path = self.layout.result(&format!("eval_{}_k{k}.json", pipeline.name()));
        write_json(&path, &rows)?;
        Ok(rows)
    }

    fn classification_row(
        &self,
        command: &str,
        lp: &LoadedPipeline,
        set: &str,
        adapted: bool,
        preds: &[(Prediction, bool)],
    ) -> Result<MetricsRow> {
        let labels: Vec<bool> = preds.iter().map(|(_, y)| *y).collect();
        let guesses: Vec<bool> = preds.iter().map(|(p, _)| p.label).collect();
        let c = Confusion::count(&labels, &guesses)?;
        Ok(MetricsRow {
            f1: Some(c.f1()),
            fpr: c.fpr().ok(),
            confusion: Some(c),
            ..self.base_row(command, lp, set, adapted, preds.len())
        })
    }

    fn memo_rows(&self, lp: &LoadedPipeline, adapted: bool) -> Result<Vec<MetricsRow>> {
        let PipelineModels::Composite { f, v } = &lp.models else {
            unreachable!("memo rows are only built for the image pipeline")
        };
        let trajs = self.trajectories(Split::Test)?;
        let ds = read_dataset(&self.layout, Split::Test, lp.k)?;
        let shift = &self.cfg.memo.shift;
        let tag = format!("memo/k{}", lp.k);
        let normal = make_normal_set(&trajs, &ds, shift, &mut self.sampling_rng(&tag));
        let shifted = make_shifted_set(&lp.enc, f, &trajs, &ds, shift, &mut self.sampling_rng(&tag))?;
        let sets = [("normal", &normal), ("shifted", &shifted)];

        let raw: Vec<Vec<(Prediction, bool)>> = sets
            .iter()
            .map(|(_, set)| frame_predictions(v, set))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for ((name, _), preds) in sets.iter().zip(&raw) {
            rows.push(self.classification_row("eval", lp, name, false, preds)?);
        }
        rows.push(self.classification_row("eval", lp, "mixed", false, &raw.concat())?);
        if !adapted {
            return Ok(rows);
        }

        let cfg = AdaptationConfig {
            seed: self.cfg.stage_seed(stage::MEMO),
            ..self.cfg.memo.adaptation
        };
        let log_path = self.layout.result(&format!("memo_events_{}_k{}.jsonl", lp.pipeline.name(), lp.k));
        let mut log = Vec::new();
        let mut adapted_preds = Vec::with_capacity(2);
        for (name, set) in sets {
            let mut adapter = Adapter::new(v.clone(), cfg)?;
            let mut preds = Vec::with_capacity(set.len());
            for (i, (y, label)) in set.frames.iter().zip(&set.labels).enumerate() {
                let (p, ev) = adapter.predict(y)?;
                log_event(&mut log, name, i, &ev)?;
                preds.push((p, *label));
            }
            rows.push(self.classification_row("eval", lp, name, true, &preds)?);
            adapted_preds.push(preds);
        }
        rows.push(self.classification_row("eval", lp, "mixed", true, &adapted_preds.concat())?);
        write_bytes(&log_path, &log)?;
        Ok(rows)
    }

    // --------------------------------------------------------------- calibrate

    /// Picks the calibrator kind with the lowest ECE when fitted on the
    /// first half of the calibration windows and scored on the second,
    /// refits it on all of them and reports ECE/Brier before and after on
    /// the test scores. Windows are in trajectory order, so the halves
    /// share almost no trajectories.
    pub fn calibrate(&self, pipeline: Pipeline, k: usize) -> Result<MetricsRow> {
        let lp = self.load_pipeline(pipeline, k)?;
        let q = self.cfg.calibration_q;
        let cal = self.scored(&lp, Split::Calibration)?;
        let (fit_half, select_half) = cal.split_at(cal.len() / 2);
        let (chosen, candidates) = select_held_out(&CalKind::ALL, fit_half, select_half, q)?;
        let best = fit(chosen.kind(), &cal, q)?;
        let test = self.scored(&lp, Split::Test)?;
        let post = best.calibrate(&test);
        let pre_bins = reliability(&test, q, BinScheme::EqualWidth)?;
        let post_bins = reliability(&post, q, BinScheme::EqualWidth)?;
        let stem = format!("{}_k{k}", pipeline.name());
        write_bytes(&self.layout.result(&format!("reliability_{stem}_pre.csv")), pre_bins.to_csv()?.as_bytes())?;
        write_bytes(&self.layout.result(&format!("reliability_{stem}_post.csv")), post_bins.to_csv()?.as_bytes())?;
        let stored = StoredCalibrator {
            pipeline,
            k,
            calibrator: best.clone(),
            candidates,
            calibration_hash: crate::conformal::dataset_hash(&cal),
            config_hash: self.cfg.hash(),
        };
        let cal_path = self.layout.model(&format!("calibrator_{stem}.json"));
        write_json(&cal_path, &stored)?;

        let labels: Vec<bool> = test.iter().map(|s| s.label).collect();
        let pre_guess: Vec<bool> = test.iter().map(|s| s.margin > 0.0).collect();
        let post_guess: Vec<bool> = post.iter().map(|s| s.score > 0.5).collect();
        let pre_c = Confusion::count(&labels, &pre_guess)?;
        let post_c = Confusion::count(&labels, &post_guess)?;
        let mut row = self.base_row("calibrate", &lp, "test", false, test.len());
        row.artifacts.insert("calibrator".into(), file_hash(&cal_path)?);
        row.f1 = Some(pre_c.f1());
        row.fpr = pre_c.fpr().ok();
        row.f1_post = Some(post_c.f1());
        row.ece_pre = Some(pre_bins.ece());
        row.ece_post = Some(post_bins.ece());
        row.brier_pre = Some(brier(&test)?);
        row.brier_post = Some(brier(&post)?);
        row.calibrator = Some(format!("{:?}", best.kind()).to_lowercase());
        write_json(&self.layout.result(&format!("calibrate_{stem}.json")), &[&row])?;
        Ok(row)
    }

    pub fn calibrator(&self, pipeline: Pipeline, k: usize) -> Result<FittedCalibrator> {
        let path = self.layout.model(&format!("calibrator_{}_k{k}.json", pipeline.name()));
        let stored: StoredCalibrator = read_json(&path, &calibrate_cmd(pipeline, k))?;
        Ok(stored.calibrator)
    }

    // --------------------------------------------------------------- conformal

    /// Bounds from calibrated validation scores, coverage on calibrated test
    /// scores.
    pub fn conformal(&self, pipeline: Pipeline, k: usize) -> Result<(ConformalBoundSet, MetricsRow)> {
        let cal = self.calibrator(pipeline, k)?;
        let lp = self.load_pipeline(pipeline, k)?;
        let val = cal.calibrate(&self.scored(&lp, Split::Validation)?);
        let test = cal.calibrate(&self.scored(&lp, Split::Test)?);
        let bset = bounds_for_all_bins(&adaptive_bin(&val, self.cfg.conformal.q)?, &self.cfg.resample())?;
        let stem = format!("{}_k{k}", pipeline.name());
        let bounds_path = self.layout.result(&format!("bounds_{stem}.json"));
        write_json(&bounds_path, &bset)?;
        write_bytes(&self.layout.result(&format!("bounds_{stem}.csv")), bset.to_csv()?.as_bytes())?;
        let cov = coverage_eval(&bset, &test, self.cfg.conformal.trials)?;
        write_bytes(&self.layout.result(&format!("coverage_{stem}.csv")), cov.to_csv()?.as_bytes())?;
        let mut row = self.base_row("conformal", &lp, "test", false, test.len());
        row.artifacts.insert("bounds".into(), file_hash(&bounds_path)?);
        row.coverage = Some(cov.aggregate);
        row.coverage_spread = Some(cov.spread);
        row.mean_bound = Some(bset.mean_bound());
        write_json(&self.layout.result(&format!("conformal_{stem}.json")), &[&row])?;
        Ok((bset, row))
    }

    // ------------------------------------------------------------------ report

    pub fn report(&self) -> Result<Vec<MetricsRow>> {
        write_report(&self.layout, &self.cfg)
    }

    /// Every command for every pipeline and horizon, then the report.
    pub fn run_all(&self) -> Result<Vec<MetricsRow>> {
        self.generate()?;
        for &k in &self.cfg.horizons {
            for p in Pipeline::ALL {
                self.train(p, k)?;
                self.eval(p, k, p == Pipeline::CompositeImage && self.cfg.memo.enabled)?;
                self.calibrate(p, k)?;
                self.conformal(p, k)?;
            }
        }
        self.report()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCalibrator {
    pub pipeline: Pipeline,
    pub k: usize,
    pub calibrator: FittedCalibrator,
    pub candidates: Vec<crate::calibration::Candidate>,
    pub calibration_hash: String,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub enum PipelineModels {
    Mono(MonolithicPredictor),
    Composite { f: LatentForecaster, v: Evaluator },
}

/// A pipeline's models loaded from disk with the hashes of their files.
#[derive(Debug, Clone)]
pub struct LoadedPipeline {
    pub pipeline: Pipeline,
    pub k: usize,
    pub enc: FrozenEncoder,
    pub models: PipelineModels,
    pub artifacts: BTreeMap<String, String>,
}

impl LoadedPipeline {
    pub fn forecaster(&self) -> Option<&LatentForecaster> {
        match &self.models {
            PipelineModels::Composite { f, .. } => Some(f),
            PipelineModels::Mono(_) => None,
        }
    }
}

/// Every state of every trajectory as a one-frame window labeled with its own
/// safety.
fn state_dataset(trajs: &[Trajectory]) -> ObservationActionDataset {
    ObservationActionDataset {
        samples: state_index(trajs)
            .into_iter()
            .map(|(trajectory, end, label)| WindowSample { trajectory, end, label })
            .collect(),
        m: 1,
        k: 0,
    }
}

fn sample_hash(samples: &[WindowSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update((s.trajectory as u64).to_le_bytes());
        h.update((s.end as u64).to_le_bytes());
        h.update([u8::from(s.label)]);
    }
    hex::encode(&h.finalize()[..8])
}

fn frame_predictions(v: &Evaluator, set: &LabeledFrames) -> Result<Vec<(Prediction, bool)>> {
    set.frames
        .iter()
        .zip(&set.labels)
        .map(|(y, &l)| Ok((v.predict(&y.pixels)?, l)))
        .collect()
}

fn log_event(out: &mut Vec<u8>, set: &str, index: usize, ev: &AdaptEvent) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        set: &'a str,
        index: usize,
        #[serde(flatten)]
        event: &'a AdaptEvent,
    }
    serde_json::to_writer(&mut *out, &Line { set, index, event: ev })?;
    out.write_all(b"\n").expect("writing to a Vec cannot fail");
    Ok(())
}
