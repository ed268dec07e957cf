//! Post-hoc calibrators over safe-class scores and the calibration metrics
//! used to choose between them.

mod fit;
mod metrics;

pub use fit::{
    fit, fit_beta, fit_histogram, fit_isotonic, fit_platt, fit_temperature, pav, select_best, select_held_out, CalKind, Candidate,
    FittedCalibrator,
};
pub use metrics::{brier, ece, logit, reliability, width_bin, BinScheme, ReliabilityBin, ReliabilityBins, ScoredSample};
