mod common;

use common::{ce_grad_error, memo_grad_error, mse_grad_error, vae_grad_error};

#[test]
fn mse_matches_central_differences() {
    for seed in 0..10 {
        let e = mse_grad_error(seed);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn cross_entropy_matches_central_differences() {
    for seed in 0..10 {
        let e = ce_grad_error(seed);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn vae_matches_central_differences() {
    for seed in 0..10 {
        let e = vae_grad_error(seed);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn memo_matches_central_differences() {
    for seed in 0..10 {
        let e = memo_grad_error(seed);
        assert!(e < 1e-3, "seed {seed}: {e}");
    }
}
