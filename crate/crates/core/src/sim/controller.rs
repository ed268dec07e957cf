use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::physics::{Action, PhysicsParams, SystemState};
use crate::rng::Rng;

/// Feedback gains over `[x, x_dot, theta, theta_dot]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainVector(pub [f64; 4]);

impl GainVector {
    pub fn dot(&self, s: &SystemState) -> f64 {
        self.0.iter().zip(s.as_array()).map(|(g, v)| g * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub nominal_gains: GainVector,
    /// Relative per-trajectory gain perturbation (std of a multiplicative factor).
    pub gain_perturbation: f64,
    /// Std of the additive decision noise.
    pub noise_std: f64,
    /// Half-width of the uniform initial-state distribution, per component.
    pub init_spread: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            nominal_gains: GainVector([0.1, 0.5, 10.0, 2.0]),
            gain_perturbation: 2.0,
            noise_std: 0.1,
            init_spread: 0.05,
        }
    }
}

impl ControllerConfig {
    /// Draws the gains used for one trajectory.
    pub fn sample_gains(&self, rng: &mut Rng) -> GainVector {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut g = self.nominal_gains.0;
        for gi in &mut g {
            *gi *= 1.0 + self.gain_perturbation * unit.sample(rng);
        }
        GainVector(g)
    }

    pub fn sample_initial_state(&self, rng: &mut Rng) -> SystemState {
        let mut draw = || rng.random_range(-self.init_spread..=self.init_spread);
        SystemState::new(draw(), draw(), draw(), draw())
    }
}

/// Noisy bang-bang state feedback: push right iff `gains · s + noise > 0`.
pub fn controller(
    s: &SystemState,
    gains: &GainVector,
    noise_std: f64,
    params: &PhysicsParams,
    rng: &mut Rng,
) -> Action {
    let noise = if noise_std > 0.0 {
        Normal::new(0.0, noise_std)
            .expect("positive std")
            .sample(rng)
    } else {
        0.0
    };
    Action::push(gains.dot(s) + noise > 0.0, params)
}
