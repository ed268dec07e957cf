//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::Rng as _;
use safechance::nn::{loss_and_grad, Activation, DenseNet, Loss, Target};
use safechance::predictors::{Evaluator, InputKind, VaeConfig, VaeEncoder};
use safechance::rng::{seeded, Rng};
use safechance::sim::{render, Observation, SystemState, FRAME_PIXELS};
use safechance::uda::{marginal_over, memo_loss, memo_loss_grad, views, AdaptationConfig};

/// `||a - b|| / max(||a||, ||b||)`, or the absolute gap when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `params` along the coordinates `coords`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(params: &[f64], coords: &[usize], h: f64, mut f: F) -> Vec<f64> {
    let mut p = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Up to `n` distinct coordinates out of `total`, always including the first
/// and last.
pub fn sample_coords(total: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    if total <= n {
        return (0..total).collect();
    }
    let mut c: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..total)).collect();
    c.push(0);
    c.push(total - 1);
    c.sort_unstable();
    c.dedup();
    c
}

fn with_params(net: &DenseNet, p: &[f64]) -> DenseNet {
    let mut n = net.clone();
    n.set_params(p.to_vec()).unwrap();
    n
}

fn random_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Relative error of the MSE gradient of a random regression net.
pub fn mse_grad_error(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let net = DenseNet::new(&[4, 6, 3], &[Activation::Tanh, Activation::Identity], &mut rng).unwrap();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| random_vec(4, 1.0, &mut rng)).collect();
    let ts: Vec<Target> = (0..5).map(|_| Target::Values(random_vec(3, 1.0, &mut rng))).collect();
    let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let (_, g) = loss_and_grad(&net, Loss::Mse, &inputs, &ts).unwrap();
    let coords: Vec<usize> = (0..net.param_count()).collect();
    let num = central_diff(net.params(), &coords, 1e-5, |p| {
        loss_and_grad(&with_params(&net, p), Loss::Mse, &inputs, &ts).unwrap().0
    });
    rel_err(&g, &num)
}

/// Relative error of the cross-entropy gradient of a random softmax net.
pub fn ce_grad_error(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let net = DenseNet::new(&[5, 7, 3], &[Activation::Tanh, Activation::Softmax], &mut rng).unwrap();
    let xs: Vec<Vec<f64>> = (0..6).map(|_| random_vec(5, 1.0, &mut rng)).collect();
    let ts: Vec<Target> = (0..6).map(|_| Target::Class(rng.random_range(0..3))).collect();
    let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let (_, g) = loss_and_grad(&net, Loss::CrossEntropy, &inputs, &ts).unwrap();
    let coords: Vec<usize> = (0..net.param_count()).collect();
    let num = central_diff(net.params(), &coords, 1e-5, |p| {
        loss_and_grad(&with_params(&net, p), Loss::CrossEntropy, &inputs, &ts).unwrap().0
    });
    rel_err(&g, &num)
}

pub fn random_frame(rng: &mut Rng) -> Observation {
    let s = SystemState::new(
        rng.random_range(-2.0..2.0),
        0.0,
        rng.random_range(-0.5f64..0.5),
        0.0,
    );
    render(&s)
}

/// Relative error of the VAE loss gradient (reconstruction plus KL through
/// the reparameterization) with the noise held fixed, over sampled
/// coordinates of both networks.
pub fn vae_grad_error(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let cfg = VaeConfig {
        latent_dim: 3,
        hidden: 6,
        lambda1: 1.0,
        recon_weight: FRAME_PIXELS as f64,
    };
    let vae = VaeEncoder::new(&cfg, seed).unwrap();
    let frames: Vec<Observation> = (0..2).map(|_| random_frame(&mut rng)).collect();
    let xs: Vec<&[f64]> = frames.iter().map(|f| f.pixels.as_slice()).collect();
    let noise: Vec<Vec<f64>> = (0..2).map(|_| random_vec(3, 1.5, &mut rng)).collect();
    let (_, g, _) = vae.loss_grad(&xs, &noise).unwrap();
    let ne = vae.enc.param_count();
    let all: Vec<f64> = vae.enc.params().iter().chain(vae.dec.params()).copied().collect();
    let coords = sample_coords(all.len(), 400, &mut rng);
    let num = central_diff(&all, &coords, 1e-5, |p| {
        let mut v = vae.clone();
        v.enc.set_params(p[..ne].to_vec()).unwrap();
        v.dec.set_params(p[ne..].to_vec()).unwrap();
        v.loss_grad(&xs, &noise).unwrap().0
    });
    let ana: Vec<f64> = coords.iter().map(|&i| g[i]).collect();
    rel_err(&ana, &num)
}

/// Relative error of the marginal-entropy gradient through all `B` views.
pub fn memo_grad_error(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut ev = Evaluator::new(FRAME_PIXELS, 6, InputKind::Image, seed).unwrap();
    // Spread the outputs so the entropy is not flat.
    for w in ev.net.params_mut() {
        *w *= 3.0;
    }
    let y = random_frame(&mut rng);
    let cfg = AdaptationConfig {
        seed,
        ..AdaptationConfig::default()
    };
    let vs = views(&y, &cfg);
    let (_, g) = memo_loss_grad(&ev, &vs).unwrap();
    let coords = sample_coords(ev.net.param_count(), 400, &mut rng);
    let num = central_diff(ev.net.params(), &coords, 1e-5, |p| {
        let mut e = ev.clone();
        e.net.set_params(p.to_vec()).unwrap();
        memo_loss(&marginal_over(&e, &vs).unwrap())
    });
    let ana: Vec<f64> = coords.iter().map(|&i| g[i]).collect();
    rel_err(&ana, &num)
}

/// Weighted monotone least squares by enumerating every split of the
/// sequence into contiguous blocks.
pub fn brute_isotonic(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    let n = ys.len();
    if n == 0 {
        return vec![];
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for i in 0..n {
            let cut = i == n - 1 || mask & (1 << i) != 0;
            if cut {
                let w: f64 = ws[start..=i].iter().sum();
                let m = ys[start..=i].iter().zip(&ws[start..=i]).map(|(y, w)| y * w).sum::<f64>() / w;
                if m < prev - 1e-15 {
                    ok = false;
                    break;
                }
                prev = m;
                fit.extend(std::iter::repeat_n(m, i + 1 - start));
                start = i + 1;
            }
        }
        if !ok {
            continue;
        }
        let sse: f64 = ys.iter().zip(ws).zip(&fit).map(|((y, w), f)| w * (y - f).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.expect("the single-block split is always monotone").1
}

/// Largest PAV-vs-oracle gap over `instances` random problems with n <= 10.
pub fn pav_oracle_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..=10);
        let ys: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    f64::from(rng.random_range(0..3u8))
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        let ws: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.1..3.0) })
            .collect();
        let pav = safechance::calibration::pav(&ys, &ws);
        let oracle = brute_isotonic(&ys, &ws);
        for (a, b) in pav.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// A run small enough for a few seconds of CPU that still touches every
/// command and pipeline.
pub fn tiny_config(out: &std::path::Path, seed: u64) -> safechance::harness::RunConfig {
    use safechance::harness::{RunConfig, SplitCounts};
    let mut c = RunConfig {
        seed,
        trajectories: SplitCounts {
            train: 40,
            calibration: 30,
            validation: 30,
            test: 30,
        },
        steps: 60,
        horizons: vec![5, 10],
        calibration_q: 5,
        eval_samples: 800,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    c.vae.frames = 400;
    c.vae.model.hidden = 16;
    c.vae.train.max_epochs = 2;
    for t in [&mut c.evaluator.train, &mut c.forecaster.train, &mut c.monolithic.train] {
        t.max_epochs = 3;
    }
    c.evaluator.samples = 800;
    c.forecaster.samples = 800;
    c.monolithic.samples = 800;
    c.memo.shift.max_samples = 60;
    c.conformal.q = 4;
    c.conformal.m = 40;
    c.conformal.n = 20;
    c.conformal.trials = 100;
    c
}

/// Checks that the four splits own pairwise disjoint seed ranges and that
/// every stored trajectory's seed lies in its split's range.
pub fn check_split_hygiene(run: &safechance::harness::Run) -> Result<(), String> {
    use safechance::harness::Split;
    use std::collections::HashSet;
    let m = run.manifest().map_err(|e| e.to_string())?;
    for (i, a) in m.splits.iter().enumerate() {
        for b in &m.splits[i + 1..] {
            if a.seed_start < b.seed_end && b.seed_start < a.seed_end {
                return Err(format!("{:?} and {:?} seed ranges overlap", a.split, b.split));
            }
        }
    }
    let mut seen = HashSet::new();
    for s in Split::ALL {
        let sm = m.splits.iter().find(|x| x.split == s).ok_or("split missing from manifest")?;
        let trajs = run.trajectories(s).map_err(|e| e.to_string())?;
        if trajs.len() != sm.trajectories {
            return Err(format!("{s:?}: manifest says {} trajectories, found {}", sm.trajectories, trajs.len()));
        }
        for t in &trajs {
            if !(sm.seed_start..sm.seed_end).contains(&t.seed) {
                return Err(format!("{s:?}: seed {} outside its range", t.seed));
            }
            if !seen.insert(t.seed) {
                return Err(format!("seed {} appears in two splits", t.seed));
            }
        }
    }
    Ok(())
}

fn typed_roundtrip<T: serde::Serialize + serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<(), String> {
    let v: T = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let mut again = serde_json::to_vec_pretty(&v).map_err(|e| e.to_string())?;
    again.push(b'\n');
    if again == bytes {
        Ok(())
    } else {
        Err("re-serialized bytes differ".into())
    }
}

fn value_roundtrip(bytes: &[u8]) -> Result<(), String> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let again: serde_json::Value = serde_json::from_slice(&serde_json::to_vec(&v).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    if v == again {
        Ok(())
    } else {
        Err("value changed after a round trip".into())
    }
}

/// Round-trips every `.json` and `.ctsr` file under `root`: typed artifacts
/// must re-serialize to identical bytes, the rest to an identical value,
/// and tensors must re-encode to identical bytes. Returns the number of
/// files checked.
pub fn check_roundtrips(root: &std::path::Path) -> Result<usize, String> {
    use safechance::conformal::ConformalBoundSet;
    use safechance::harness::{Manifest, MetricsRow, Sidecar, StoredCalibrator, TensorFile};
    use safechance::sim::{ObservationActionDataset, Trajectory};
    let mut stack = vec![root.to_path_buf()];
    let mut checked = 0;
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let parent = path.parent().and_then(|p| p.file_name()).map(|p| p.to_string_lossy().into_owned());
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            let outcome = if name.ends_with(".ctsr") {
                TensorFile::from_bytes(&bytes).map_err(|e| e.to_string()).and_then(|t| {
                    if t.to_bytes() == bytes {
                        Ok(())
                    } else {
                        Err("tensor re-encodes differently".into())
                    }
                })
            } else if !name.ends_with(".json") {
                continue;
            } else if name == "manifest.json" {
                typed_roundtrip::<Manifest>(&bytes)
            } else if name == "trajectories.json" {
                typed_roundtrip::<Vec<Trajectory>>(&bytes)
            } else if name.starts_with("dataset_k") {
                typed_roundtrip::<ObservationActionDataset>(&bytes)
            } else if name.starts_with("calibrator_") {
                typed_roundtrip::<StoredCalibrator>(&bytes)
            } else if name.starts_with("bounds_") {
                typed_roundtrip::<ConformalBoundSet>(&bytes)
            } else if ["eval_", "calibrate_", "conformal_"].iter().any(|p| name.starts_with(p)) {
                typed_roundtrip::<Vec<MetricsRow>>(&bytes)
            } else if parent.as_deref() == Some("models") {
                typed_roundtrip::<Sidecar>(&bytes)
            } else {
                value_roundtrip(&bytes)
            };
            outcome.map_err(|e| format!("{}: {e}", path.display()))?;
            checked += 1;
        }
    }
    Ok(checked)
}
