//! Post-hoc calibration of overconfident safety scores: fits every
//! calibrator kind, selects on held-out data and prints reliability tables.
//!
//! cargo run --release --example calibration

use rand::Rng as _;
use safechance::calibration::{brier, ece, reliability, select_held_out, BinScheme, CalKind, ScoredSample};
use safechance::rng::seeded;

/// True safety chance `p`, reported with its log-odds tripled.
fn overconfident(n: usize, seed: u64) -> Vec<ScoredSample> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let p: f64 = rng.random_range(0.02..0.98);
            let margin = 3.0 * (p / (1.0 - p)).ln();
            ScoredSample::from_logits([0.0, margin], rng.random::<f64>() < p)
        })
        .collect()
}

fn main() -> safechance::Result<()> {
    let cal = overconfident(4000, 1);
    let test = overconfident(4000, 2);
    let (fit_half, select_half) = cal.split_at(cal.len() / 2);
    let (best, candidates) = select_held_out(&CalKind::ALL, fit_half, select_half, 10)?;
    for c in &candidates {
        println!("{:<12} held-out ECE {:?}", format!("{:?}", c.kind), c.ece);
    }
    println!("selected {:?}: {best:?}", best.kind());

    let post = best.calibrate(&test);
    println!(
        "test ECE {:.4} -> {:.4}, Brier {:.4} -> {:.4}",
        ece(&test, 10, BinScheme::EqualWidth)?,
        ece(&post, 10, BinScheme::EqualWidth)?,
        brier(&test)?,
        brier(&post)?
    );
    println!("\nreliability before:\n{}", reliability(&test, 10, BinScheme::EqualWidth)?.to_csv()?);
    println!("reliability after:\n{}", reliability(&post, 10, BinScheme::EqualWidth)?.to_csv()?);
    Ok(())
}
