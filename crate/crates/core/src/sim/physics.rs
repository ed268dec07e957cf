use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the track; the cart leaves the valid region beyond it.
pub const TRACK_LIMIT: f64 = 2.4;
/// Pole angle magnitude (degrees) beyond which a rollout is terminated.
pub const ACTIVITY_LIMIT_DEG: f64 = 48.0;
/// Pole angle magnitude (degrees) up to which a state counts as safe.
pub const SAFE_LIMIT_DEG: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length, as in the classic formulation.
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass_cart", self.mass_cart),
            ("mass_pole", self.mass_pole),
            ("half_length", self.half_length),
            ("dt", self.dt),
            ("force_mag", self.force_mag),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "physics parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.gravity.is_finite() {
            return Err(Error::NonFinite {
                what: "gravity",
                value: self.gravity,
            });
        }
        Ok(())
    }
}

/// Ground-truth cart-pole state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl SystemState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        let names = ["x", "x_dot", "theta", "theta_dot"];
        for (name, v) in names.iter().zip(self.as_array()) {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite state component {name} = {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Bang-bang force command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub force: f64,
}

impl Action {
    pub fn push(positive: bool, p: &PhysicsParams) -> Self {
        Self {
            force: if positive { p.force_mag } else { -p.force_mag },
        }
    }

    /// Force sign as ±1, the scalar appended to latents.
    pub fn sign(&self) -> f64 {
        if self.force >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Angular and linear accelerations of the classic cart-pole ODE.
pub fn accelerations(s: &SystemState, force: f64, p: &PhysicsParams) -> (f64, f64) {
    let total = p.mass_cart + p.mass_pole;
    let (sin, cos) = s.theta.sin_cos();
    let pml = p.mass_pole * p.half_length;
    let temp = (-force - pml * s.theta_dot * s.theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin + cos * temp)
        / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total));
    let x_acc = (force + pml * (s.theta_dot * s.theta_dot * sin - theta_acc * cos)) / total;
    (theta_acc, x_acc)
}

/// Advance one timestep with semi-implicit Euler (rates first, then positions).
pub fn step(s: &SystemState, a: &Action, p: &PhysicsParams) -> Result<SystemState> {
    s.check_finite()?;
    if !a.force.is_finite() {
        return Err(Error::NonFinite {
            what: "force",
            value: a.force,
        });
    }
    let (theta_acc, x_acc) = accelerations(s, a.force, p);
    let x_dot = s.x_dot + p.dt * x_acc;
    let theta_dot = s.theta_dot + p.dt * theta_acc;
    Ok(SystemState {
        x: s.x + p.dt * x_dot,
        x_dot,
        theta: s.theta + p.dt * theta_dot,
        theta_dot,
    })
}

/// The safety predicate: |theta| within the closed ±6° range.
pub fn is_safe(s: &SystemState) -> bool {
    s.theta.abs() <= SAFE_LIMIT_DEG.to_radians()
}
