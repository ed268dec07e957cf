//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(seed, stream)`, so parallel or reordered work never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids for independent consumers sharing one run seed.
pub mod streams {
    pub const VAE: u64 = 1;
    pub const FORECASTER: u64 = 2;
    pub const EVALUATOR: u64 = 3;
    pub const MONOLITHIC: u64 = 4;
    pub const REBALANCE: u64 = 5;
    pub const MEMO: u64 = 6;
    pub const CONFORMAL: u64 = 7;
    pub const COVERAGE: u64 = 8;
    pub const SHIFT: u64 = 9;
    pub const CALIBRATION: u64 = 10;
    pub const SUBSAMPLE: u64 = 11;
}
