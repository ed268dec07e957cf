use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over parameter slices laid end to end.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let total: usize = params.iter().map(|p| p.len()).sum();
    if total != grads.len() || total != state.m.len() {
        return Err(Error::DimensionMismatch {
            stage: "adam state".into(),
            expected: total,
            got: grads.len().min(state.m.len()),
        });
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    let mut k = 0;
    for slice in params.iter_mut() {
        for p in slice.iter_mut() {
            let g = grads[k];
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
            k += 1;
        }
    }
    Ok(())
}
