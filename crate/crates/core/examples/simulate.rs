//! Rolls out the noisy bang-bang controller, renders a frame and builds the
//! windowed safety dataset for a few horizons.
//!
//! cargo run --release --example simulate

use safechance::sim::{build_dataset, has_violation, simulate, ControllerConfig, PhysicsParams, FRAME_WIDTH};

fn main() -> safechance::Result<()> {
    let ctrl = ControllerConfig::default();
    let physics = PhysicsParams::default();
    let trajs = (0..200)
        .map(|seed| simulate(seed, 200, &ctrl, &physics))
        .collect::<safechance::Result<Vec<_>>>()?;

    let violating = trajs.iter().filter(|t| has_violation(t)).count();
    let states: usize = trajs.iter().map(|t| t.len()).sum();
    println!("{} trajectories, {states} states, {violating} with a safety violation", trajs.len());

    let t = &trajs[0];
    println!("trajectory 0: gains {:?}, ended by {:?}", t.gains.0, t.termination);
    let frame = t.observation(0);
    for row in frame.pixels.chunks(FRAME_WIDTH) {
        let line: String = row.iter().map(|&p| if p > 0.5 { '#' } else { '.' }).collect();
        println!("  {line}");
    }

    for k in [5, 10, 20, 30] {
        let ds = build_dataset(&trajs, 8, k)?;
        let (safe, unsafe_) = ds.class_counts();
        println!("m=8 k={k:>2}: {:>6} windows, {safe:>6} safe, {unsafe_:>5} unsafe", ds.len());
    }
    Ok(())
}
