//! Trains the frame VAE on rendered cart-pole frames, then freezes it and
//! round-trips a frame through the latent space.
//!
//! cargo run --release --example vae

use safechance::nn::TrainConfig;
use safechance::predictors::{train_vae, VaeConfig};
use safechance::sim::{simulate, ControllerConfig, Observation, PhysicsParams};

fn main() -> safechance::Result<()> {
    let trajs = (0..40)
        .map(|seed| simulate(seed, 200, &ControllerConfig::default(), &PhysicsParams::default()))
        .collect::<safechance::Result<Vec<_>>>()?;
    let frames: Vec<Observation> = trajs.iter().flat_map(|t| t.observations().step_by(4)).collect();
    let (train, held) = frames.split_at(frames.len() * 9 / 10);

    let cfg = VaeConfig::default();
    let tcfg = TrainConfig {
        max_epochs: 15,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (vae, report) = train_vae(train, &cfg, &tcfg)?;
    println!(
        "trained on {} frames for {} epochs ({:?}); {} low-variance batches",
        train.len(),
        report.train.loss_curve.len(),
        report.train.stop,
        report.collapse_warnings
    );
    println!("held-out reconstruction MSE {:.5}", vae.reconstruction_mse(held)?);

    let enc = vae.freeze();
    let z = enc.encode(&held[0])?;
    let back = enc.decode(&z)?;
    let lit = |o: &Observation| o.pixels.iter().filter(|&&p| p > 0.5).count();
    println!(
        "latent ({} dims) {:.3?}\nlit pixels: original {}, reconstruction {}",
        enc.latent_dim(),
        z,
        lit(&held[0]),
        lit(&back)
    );
    Ok(())
}
