//! Every command of the experiment harness on a reduced configuration:
//! generate, train, eval (with MEMO rows), calibrate, conformal and report.
//! The same run is available from the command line as `safechance all`.
//!
//! cargo run --release --example pipeline [out_dir]

use safechance::harness::{Run, RunConfig, SplitCounts};

fn main() -> safechance::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/example".into());
    let mut cfg = RunConfig {
        trajectories: SplitCounts {
            train: 200,
            calibration: 200,
            validation: 200,
            test: 200,
        },
        horizons: vec![5, 20],
        out_dir: out.into(),
        ..RunConfig::default()
    };
    cfg.vae.frames = 2000;
    cfg.memo.shift.max_samples = 500;

    let run = Run::new(cfg)?;
    let rows = run.run_all()?;
    println!("{:<10} {:<16} {:>3} {:<8} {:>7} {:>7} {:>9} {:>8}", "command", "pipeline", "k", "set", "adapted", "f1", "ece_post", "coverage");
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        println!(
            "{:<10} {:<16} {:>3} {:<8} {:>7} {:>7} {:>9} {:>8}",
            r.command,
            r.pipeline.name(),
            r.k,
            r.set,
            r.adapted,
            show(r.f1),
            show(r.ece_post),
            show(r.coverage)
        );
    }
    println!("report written to {}", run.layout.result("report.csv").display());
    Ok(())
}
