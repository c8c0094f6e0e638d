//! Shared fixtures for the benchmarks.

use levycensor_core::{Domain, LevyModel};

/// Unit disc in the plane.
pub fn disc() -> Domain {
    Domain::ball(vec![0.0, 0.0], 1.0).expect("valid ball")
}

/// Calibrated planar stable model.
pub fn planar_stable(alpha: f64) -> LevyModel {
    LevyModel::calibrated_stable(2, alpha).expect("valid stable index")
}
