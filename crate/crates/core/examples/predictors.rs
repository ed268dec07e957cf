//! Trains a monolithic and a composite safety predictor at one horizon on a
//! frozen VAE's latents and compares their test F1.
//!
//! cargo run --release --example predictors

use safechance::harness::f1;
use safechance::nn::TrainConfig;
use safechance::predictors::{
    evaluate_latents, latent_windows, mono_inputs, state_index, train_evaluator, train_forecaster,
    train_monolithic, train_vae, Forecast, InputKind, LatentCache, MonoInput, VaeConfig,
};
use safechance::rng::seeded;
use safechance::sim::{build_dataset, rebalance, simulate, ControllerConfig, Observation, PhysicsParams, Trajectory};

const M: usize = 8;
const K: usize = 20;

fn rollouts(seeds: std::ops::Range<u64>) -> safechance::Result<Vec<Trajectory>> {
    seeds
        .map(|s| simulate(s, 200, &ControllerConfig::default(), &PhysicsParams::default()))
        .collect()
}

fn main() -> safechance::Result<()> {
    let train = rollouts(0..200)?;
    let test = rollouts(10_000..10_100)?;
    let head = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 25,
        ..TrainConfig::default()
    };

    let frames: Vec<Observation> = train.iter().flat_map(|t| t.observations().step_by(10)).collect();
    let vae_train = TrainConfig {
        max_epochs: 15,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let enc = train_vae(&frames, &VaeConfig::default(), &vae_train)?.0.freeze();
    let train_cache = LatentCache::build(&enc, &train)?;
    let test_cache = LatentCache::build(&enc, &test)?;

    let mut rng = seeded(1);
    let ds = rebalance(&build_dataset(&train, M, K)?, &mut rng)?;
    let test_ds = build_dataset(&test, M, K)?;
    let labels = test_ds.labels();

    // Monolithic: window of latents and actions straight to a safety label.
    let x = mono_inputs(MonoInput::Latent, Some(&train_cache), &train, &ds)?;
    let (mono, _) = train_monolithic(&x, &ds.labels(), MonoInput::Latent, M, K, Some(enc.fingerprint().into()), 32, &head)?;
    let guesses = mono_inputs(MonoInput::Latent, Some(&test_cache), &test, &test_ds)?
        .iter()
        .map(|x| Ok(mono.predict_features(x)?.label))
        .collect::<safechance::Result<Vec<bool>>>()?;
    println!("monolithic k={K}: test F1 {:.4}", f1(&labels, &guesses)?);

    // Composite: forecast the latent K steps ahead, then judge that state.
    let (forecaster, _) = train_forecaster(&enc, &latent_windows(&train_cache, &train, &ds, 1)?, 64, &head)?;
    let states = state_index(&train);
    let z: Vec<Vec<f64>> = states.iter().map(|&(t, i, _)| train_cache.latents[t][i].clone()).collect();
    let safe: Vec<bool> = states.iter().map(|&(_, _, s)| s).collect();
    let (evaluator, _) = train_evaluator(&z, &safe, InputKind::Latent, 32, &head)?;
    let test_windows = latent_windows(&test_cache, &test, &test_ds, 1)?;
    let guesses = test_windows
        .inputs
        .iter()
        .map(|x| {
            let out = forecaster.net.forward(x)?;
            Ok(evaluate_latents(&evaluator, &[out])?.label)
        })
        .collect::<safechance::Result<Vec<bool>>>()?;
    println!(
        "composite  k={K}: test F1 {:.4} (forecaster window m={}, n={})",
        f1(&labels, &guesses)?,
        forecaster.input_window(),
        forecaster.output_window()
    );
    Ok(())
}
