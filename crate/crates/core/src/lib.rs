pub mod calibration;
pub mod conformal;
pub mod error;
pub mod harness;
pub mod nn;
pub mod predictors;
pub mod rng;
pub mod sim;
pub mod uda;

pub use error::{Error, Result};
