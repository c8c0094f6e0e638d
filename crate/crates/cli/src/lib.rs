//! Command-line harness: configuration parsing, experiment dispatch and
//! report output for the `levycensor` binary.

pub mod config;
pub mod experiments;
pub mod output;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

pub use config::{parse_config, ConfigLayer, ExperimentConfig, ExperimentId};
pub use experiments::{Outcome, SampleRow};
pub use output::{Report, RunManifest};

/// Exit code of a run whose checks all held.
pub const EXIT_PASS: i32 = 0;
/// Exit code of a runtime failure.
pub const EXIT_ERROR: i32 = 1;
/// Exit code of a run that completed with a violated bound.
pub const EXIT_VIOLATION: i32 = 2;

/// Runs the experiment on the configured worker pool without writing files.
pub fn run_outcome(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .context("cannot build the worker pool")?
            .install(|| experiments::run(cfg)),
        None => experiments::run(cfg),
    }
}

/// Runs the experiment and writes report, samples and manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = run_outcome(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    output::write_outputs(&output::resolve_out_dir(cfg), cfg, &outcome, wall, stamp)
}

pub fn exit_code(result: &Result<RunManifest>) -> i32 {
    match result {
        Ok(m) if m.pass => EXIT_PASS,
        Ok(_) => EXIT_VIOLATION,
        Err(_) => EXIT_ERROR,
    }
}
