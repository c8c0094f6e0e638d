//! Simulation and numerical potential theory for censored symmetric pure-jump
//! Lévy processes on bounded domains.
//!
//! The crate is layered bottom-up: [`kernels`] evaluates the analytic model
//! quantities, [`geometry`] represents domains and their κ-fat structure,
//! [`pathsim`] simulates killed and censored paths, [`potential`] turns paths
//! into Green-function, exit-law and gauge estimates, and [`verify`] runs the
//! inequality sweeps and the boundary-regime classifier. [`oracle`] holds the
//! classical stable-process closed forms used as independent references.

// `!(x > 0.0)` guards reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod error;
pub mod geometry;
pub mod kernels;
pub mod oracle;
pub mod pathsim;
pub mod potential;
pub mod quad;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{Corridor, Domain, Shape};
pub use kernels::{
    big_phi, estimate_scaling_exponents, killing_density, levy_density, phi, small_jump_variance,
    tail_mass, BernsteinProfile, LevyModel, ScalingEstimate, ScalingGrid,
};
pub use pathsim::{
    censored_battery, censored_functional, exit_via_censored, fk_battery, fk_functional, run_censored_inw, run_killed, sample_jump,
    Dynamics, PathRecord, PathStatus, SimConfig, Simulator,
};
pub use stats::{Diagnostics, Estimate};
pub use potential::{GreenSource, MonteCarloGreen, OracleGreen};
pub use verify::{InequalityReport, RegimePrediction, Verdict};
