//! Test-time adaptation of an image safety evaluator with MEMO. The shifted
//! inputs are the VAE's decoded long-horizon forecasts, which are blurrier
//! than the rendered frames the evaluator was trained on.
//!
//! cargo run --release --example memo

use safechance::harness::f1;
use safechance::nn::TrainConfig;
use safechance::predictors::{
    latent_windows, state_index, train_evaluator, train_forecaster, train_vae, Evaluator, InputKind, LatentCache,
    VaeConfig,
};
use safechance::rng::seeded;
use safechance::sim::{build_dataset, rebalance, simulate, ControllerConfig, Observation, PhysicsParams, Trajectory};
use safechance::uda::{make_normal_set, make_shifted_set, AdaptationConfig, Adapter, LabeledFrames, ShiftConfig};

const K: usize = 20;

fn rollouts(seeds: std::ops::Range<u64>) -> safechance::Result<Vec<Trajectory>> {
    seeds
        .map(|s| simulate(s, 200, &ControllerConfig::default(), &PhysicsParams::default()))
        .collect()
}

fn f1_on(v: &Evaluator, set: &LabeledFrames, adapt: Option<&AdaptationConfig>) -> safechance::Result<f64> {
    let mut guesses = Vec::with_capacity(set.len());
    match adapt {
        None => {
            for y in &set.frames {
                guesses.push(v.predict(&y.pixels)?.label);
            }
        }
        Some(cfg) => {
            let mut a = Adapter::new(v.clone(), *cfg)?;
            for y in &set.frames {
                guesses.push(a.predict(y)?.0.label);
            }
        }
    }
    f1(&set.labels, &guesses)
}

fn main() -> safechance::Result<()> {
    let train = rollouts(0..200)?;
    let test = rollouts(20_000..20_150)?;
    let head = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 25,
        ..TrainConfig::default()
    };

    // Image evaluator on true frames, one per state, classes balanced.
    let states = state_index(&train);
    let mut rng = seeded(5);
    let mut picked: Vec<usize> = (0..states.len()).step_by(3).collect();
    let unsafe_idx: Vec<usize> = (0..states.len()).filter(|&i| !states[i].2).collect();
    while picked.iter().filter(|&&i| !states[i].2).count() * 2 < picked.len() {
        picked.push(unsafe_idx[rand::Rng::random_range(&mut rng, 0..unsafe_idx.len())]);
    }
    let x: Vec<Vec<f64>> = picked.iter().map(|&i| train[states[i].0].observation(states[i].1).pixels).collect();
    let y: Vec<bool> = picked.iter().map(|&i| states[i].2).collect();
    let (evaluator, _) = train_evaluator(&x, &y, InputKind::Image, 32, &head)?;

    // VAE and latent forecaster produce the shifted frames.
    let frames: Vec<Observation> = train.iter().flat_map(|t| t.observations().step_by(10)).collect();
    let vae_train = TrainConfig {
        max_epochs: 15,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let enc = train_vae(&frames, &VaeConfig::default(), &vae_train)?.0.freeze();
    let cache = LatentCache::build(&enc, &train)?;
    let ds = rebalance(&build_dataset(&train, 8, K)?, &mut rng)?;
    let (forecaster, _) = train_forecaster(&enc, &latent_windows(&cache, &train, &ds, 1)?, 64, &head)?;

    let shift = ShiftConfig {
        max_samples: 400,
        ..ShiftConfig::default()
    };
    let test_ds = build_dataset(&test, 8, K)?;
    let shifted = make_shifted_set(&enc, &forecaster, &test, &test_ds, &shift, &mut seeded(6))?;
    let normal = make_normal_set(&test, &test_ds, &shift, &mut seeded(6));

    let memo = AdaptationConfig::default();
    println!("{} shifted and {} normal frames, B={} views, eta={}", shifted.len(), normal.len(), memo.b, memo.eta);
    println!("normal  F1: raw {:.4}, adapted {:.4}", f1_on(&evaluator, &normal, None)?, f1_on(&evaluator, &normal, Some(&memo))?);
    println!("shifted F1: raw {:.4}, adapted {:.4}", f1_on(&evaluator, &shifted, None)?, f1_on(&evaluator, &shifted, Some(&memo))?);
    Ok(())
}
