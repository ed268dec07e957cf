//! Conformal bounds on the per-bin calibration error of safety scores, the
//! resulting interval predictions and their empirical coverage.
//!
//! cargo run --release --example conformal

use rand::Rng as _;
use safechance::calibration::ScoredSample;
use safechance::conformal::{adaptive_bin, bounds_for_all_bins, coverage_eval, interval_predict, ResampleConfig};
use safechance::rng::seeded;

/// Well-calibrated scores: each label is drawn with its score as the chance.
fn calibrated(n: usize, seed: u64) -> Vec<ScoredSample> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let s: f64 = rng.random::<f64>().powf(0.3);
            ScoredSample::new(s, rng.random::<f64>() < s)
        })
        .collect()
}

fn main() -> safechance::Result<()> {
    let val = calibrated(20_000, 1);
    let test = calibrated(20_000, 2);
    let cfg = ResampleConfig {
        seed: 3,
        ..ResampleConfig::default()
    };
    let bounds = bounds_for_all_bins(&adaptive_bin(&val, 10)?, &cfg)?;
    print!("{}", bounds.to_csv()?);

    for score in [0.2, 0.6, 0.9, 0.99] {
        let iv = interval_predict(score, &bounds)?;
        println!("chance {score:.2} -> [{:.3}, {:.3}] (bin {})", iv.lo, iv.hi, iv.bin_index);
    }

    let cov = coverage_eval(&bounds, &test, 2000)?;
    println!(
        "coverage {:.4} +- {:.4} over {} resamples per bin, mean bound {:.4}",
        cov.aggregate,
        cov.spread,
        cov.trials,
        bounds.mean_bound()
    );
    Ok(())
}
