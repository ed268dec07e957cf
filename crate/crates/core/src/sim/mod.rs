//! Toy cart-pole environment: physics, rasterized observations, a noisy
//! scripted controller, rollouts, and windowed safety datasets.

mod controller;
mod dataset;
mod physics;
mod render;

pub use controller::{controller, ControllerConfig, GainVector};
pub use dataset::{build_dataset, rebalance, ObservationActionDataset, WindowSample};
pub use physics::{
    accelerations, is_safe, step, Action, PhysicsParams, SystemState, ACTIVITY_LIMIT_DEG,
    SAFE_LIMIT_DEG, TRACK_LIMIT,
};
pub use render::{
    cart_column, cart_pixels, pole_pixels, render, render_checked, Observation, CART_ROWS,
    CART_WIDTH, FRAME_HEIGHT, FRAME_PIXELS, FRAME_WIDTH, POLE_BASE_ROW, POLE_PIXELS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Ran for the requested number of steps.
    Completed,
    /// |theta| left the activity range at the recorded step.
    AngleLimit { step: usize },
    /// |x| left the track at the recorded step.
    TrackLimit { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub actions: Vec<Action>,
    pub seed: u64,
    pub gains: GainVector,
    pub termination: Termination,
    /// State indices whose frame was rendered with a clamped cart position.
    pub clamped_frames: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Frame of state `i`; frames are a pure function of the state.
    pub fn observation(&self, i: usize) -> Observation {
        render(&self.states[i])
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        self.states.iter().map(render)
    }
}

fn out_of_activity_range(s: &SystemState) -> bool {
    s.theta.abs() > ACTIVITY_LIMIT_DEG.to_radians()
}

/// Runs controller, dynamics and renderer from `s0` for up to `steps` steps.
///
/// The state that first leaves the track or the activity range is kept as the
/// final element, so the trajectory always ends in the state that caused
/// termination.
pub fn rollout(
    s0: SystemState,
    steps: usize,
    gains: &GainVector,
    noise_std: f64,
    params: &PhysicsParams,
    rng: &mut Rng,
) -> Result<(Vec<SystemState>, Vec<Action>, Termination)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("rollout needs steps >= 1".into()));
    }
    if !gains.is_finite() {
        return Err(Error::InvalidArgument("controller gains must be finite".into()));
    }
    params.validate()?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    states.push(s0);
    let mut termination = Termination::Completed;
    let mut s = s0;
    for t in 1..=steps {
        let a = controller(&s, gains, noise_std, params, rng);
        s = step(&s, &a, params)?;
        actions.push(a);
        states.push(s);
        if s.x.abs() > TRACK_LIMIT {
            termination = Termination::TrackLimit { step: t };
            break;
        }
        if out_of_activity_range(&s) {
            termination = Termination::AngleLimit { step: t };
            break;
        }
    }
    Ok((states, actions, termination))
}

/// Samples gains and an initial state from `seed`, then rolls out.
pub fn simulate(
    seed: u64,
    steps: usize,
    ctrl: &ControllerConfig,
    params: &PhysicsParams,
) -> Result<Trajectory> {
    let mut rng = seeded(seed);
    let gains = ctrl.sample_gains(&mut rng);
    let s0 = ctrl.sample_initial_state(&mut rng);
    let (states, actions, termination) =
        rollout(s0, steps, &gains, ctrl.noise_std, params, &mut rng)?;
    let clamped_frames = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.x.abs() > TRACK_LIMIT)
        .map(|(i, _)| i)
        .collect();
    Ok(Trajectory {
        states,
        actions,
        seed,
        gains,
        termination,
        clamped_frames,
    })
}

/// Whether any state of the trajectory is unsafe.
pub fn has_violation(t: &Trajectory) -> bool {
    t.states.iter().any(|s| !is_safe(s))
}
