//! Report, sample CSV and run-manifest files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{Outcome, SampleRow};

/// Version of the report and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LEVYCENSOR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "levycensor-out";

/// The JSON report of one run. Contains no timestamps, so equal configs give
/// equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub experiment: ExperimentId,
    pub config_hash: String,
    /// The configuration without output location and worker count.
    pub config: ExperimentConfig,
    pub pass: bool,
    pub result: Value,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub experiment: ExperimentId,
    pub config_hash: String,
    pub pass: bool,
    pub wall_time_seconds: f64,
    pub timestamp_unix: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    /// Checks that every listed output exists and parses.
    pub fn verify_outputs(&self) -> Result<()> {
        for path in &self.outputs {
            let text = fs::read_to_string(path).with_context(|| format!("missing output {}", path.display()))?;
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => {
                    serde_json::from_str::<Value>(&text).with_context(|| format!("{} is not JSON", path.display()))?;
                }
                Some("csv") => {
                    read_samples(path)?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Output directory: the configured one, else the environment default.
pub fn resolve_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn report_path(dir: &Path, exp: ExperimentId) -> PathBuf {
    dir.join(format!("{exp}.report.json"))
}

pub fn samples_path(dir: &Path, exp: ExperimentId) -> PathBuf {
    dir.join(format!("{exp}.samples.csv"))
}

pub fn manifest_path(dir: &Path, exp: ExperimentId) -> PathBuf {
    dir.join(format!("{exp}.manifest.json"))
}

pub fn build_report(cfg: &ExperimentConfig, outcome: &Outcome) -> Report {
    Report {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        experiment: cfg.exp,
        config_hash: cfg.hash(),
        config: ExperimentConfig { out: None, workers: None, ..cfg.clone() },
        pass: outcome.pass,
        result: outcome.result.clone(),
    }
}

/// Writes report, samples and manifest into `dir`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    wall_time_seconds: f64,
    timestamp_unix: u64,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let report = build_report(cfg, outcome);
    let rp = report_path(dir, cfg.exp);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&rp, text).with_context(|| format!("cannot write {}", rp.display()))?;
    let sp = samples_path(dir, cfg.exp);
    let mut w = csv::Writer::from_path(&sp).with_context(|| format!("cannot write {}", sp.display()))?;
    for row in &outcome.samples {
        w.serialize(row)?;
    }
    w.flush()?;
    let mp = manifest_path(dir, cfg.exp);
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        experiment: cfg.exp,
        config_hash: report.config_hash,
        pass: outcome.pass,
        wall_time_seconds,
        timestamp_unix,
        outputs: vec![rp, sp, mp.clone()],
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mp, text).with_context(|| format!("cannot write {}", mp.display()))?;
    Ok(manifest)
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("bad row in {}", path.display()))).collect()
}
