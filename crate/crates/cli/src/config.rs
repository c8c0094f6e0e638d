//! Experiment configuration: JSON files, flag overrides and validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use levycensor_core::oracle::stable_levy_constant;
use levycensor_core::{BernsteinProfile, Domain, LevyModel, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    KernelInfo,
    Green,
    Exitlaw,
    Gauge,
    Threeg,
    GenThreeg,
    HarnackX,
    HarnackY,
    Carleson,
    Lemma41,
    Boundary,
    Equivalence,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// One configuration layer. Files and flags both produce layers; a flag
/// layer is merged over a file layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Experiment id.
    #[arg(long)]
    pub exp: Option<ExperimentId>,
    /// Bernstein profile, e.g. `stable:alpha=1.2` or `stablesum:alpha=1.4,beta=0.6`.
    #[arg(long)]
    pub phi: Option<String>,
    /// Spatial dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Multiplier of the Lévy density; defaults to A(n, α) for pure powers and 1 otherwise.
    #[arg(long)]
    pub calibration: Option<f64>,
    /// Domain, e.g. `ball:r=1`, `box:0,0,2,1`, `annulus:rin=0.5,rout=1`, `interval:-1,1`.
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo paths (per pair, per point or in total, depending on the experiment).
    #[arg(long = "n-paths", short = 'N')]
    pub n_paths: Option<u64>,
    /// Sampled tuples per refinement level of the Green sweeps.
    #[arg(long)]
    pub triples: Option<usize>,
    /// Number of point pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Small-jump cutoff ε.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Averaging radius of the Green estimators.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Refinement margins of the Green sweeps.
    #[arg(long, value_delimiter = ',')]
    pub margins: Option<Vec<f64>>,
    /// Horizons of the boundary experiment.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    /// Radius factor r₁ of the κ-integral balls.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Pair separation factor L of the Harnack sweeps.
    #[arg(long = "L", short = 'L')]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Outer radius r of the κ-integral and gauge balls.
    #[arg(long)]
    pub r: Option<f64>,
    /// Scales of the Harnack and Carleson sweeps.
    #[arg(long = "r-list", value_delimiter = ',')]
    pub r_list: Option<Vec<f64>>,
    /// Starting point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Time t of the equivalence experiment.
    #[arg(long)]
    pub time: Option<f64>,
    /// Cutoff as a fraction of the boundary distance near ∂D.
    #[arg(long = "boundary-cut-ratio")]
    pub boundary_cut_ratio: Option<f64>,
    /// Replace dropped small jumps by a Gaussian displacement.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub gaussian: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl ConfigLayer {
    /// Parses a JSON layer; errors carry line and column.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            anyhow!("parse error in {origin} at line {}, column {}: {e}", e.line(), e.column())
        })
    }

    /// Values of `top` replace those of `self`.
    pub fn merged(mut self, top: &ConfigLayer) -> Self {
        overlay!(
            self, top, exp, phi, dim, calibration, domain, seed, n_paths, triples, pairs, eps, rho, margins,
            horizons, r1, l, r, r_list, x0, time, boundary_cut_ratio, gaussian, out, workers
        );
        self
    }
}

/// A validated experiment configuration. Experiment-specific knobs left
/// unset take the experiment's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub exp: ExperimentId,
    pub phi: String,
    pub dim: usize,
    pub calibration: Option<f64>,
    pub domain: String,
    pub seed: u64,
    pub n_paths: Option<u64>,
    pub triples: Option<usize>,
    pub pairs: Option<usize>,
    pub eps: Option<f64>,
    pub rho: Option<f64>,
    pub margins: Option<Vec<f64>>,
    pub horizons: Option<Vec<f64>>,
    pub r1: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub r: Option<f64>,
    pub r_list: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub time: Option<f64>,
    pub boundary_cut_ratio: Option<f64>,
    pub gaussian: bool,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub const DEFAULT_PHI: &str = "stable:alpha=1.2";
pub const DEFAULT_DOMAIN: &str = "ball:r=1";

impl ExperimentConfig {
    /// Fills defaults and validates a merged layer.
    pub fn from_layer(layer: ConfigLayer) -> Result<Self> {
        let cfg = Self {
            exp: layer.exp.ok_or_else(|| anyhow!("no experiment selected (set `exp` or pass --exp)"))?,
            phi: layer.phi.unwrap_or_else(|| DEFAULT_PHI.into()),
            dim: layer.dim.unwrap_or(2),
            calibration: layer.calibration,
            domain: layer.domain.unwrap_or_else(|| DEFAULT_DOMAIN.into()),
            seed: layer.seed.unwrap_or(0),
            n_paths: layer.n_paths,
            triples: layer.triples,
            pairs: layer.pairs,
            eps: layer.eps,
            rho: layer.rho,
            margins: layer.margins,
            horizons: layer.horizons,
            r1: layer.r1,
            l: layer.l,
            r: layer.r,
            r_list: layer.r_list,
            x0: layer.x0,
            time: layer.time,
            boundary_cut_ratio: layer.boundary_cut_ratio,
            gaussian: layer.gaussian.unwrap_or(false),
            out: layer.out,
            workers: layer.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let domain = self.domain()?;
        if model.dim() != domain.dim() {
            bail!("model dimension {} differs from domain dimension {}", model.dim(), domain.dim());
        }
        let positive = [
            ("eps", self.eps),
            ("rho", self.rho),
            ("r1", self.r1),
            ("L", self.l),
            ("r", self.r),
            ("time", self.time),
        ];
        if let Some((k, v)) = positive.iter().find_map(|(k, v)| v.filter(|v| !(*v > 0.0 && v.is_finite())).map(|v| (k, v))) {
            bail!("`{k}` must be positive and finite, got {v}");
        }
        if self.n_paths == Some(0) || self.triples == Some(0) || self.pairs == Some(0) || self.workers == Some(0) {
            bail!("counts (n_paths, triples, pairs, workers) must be at least 1");
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.dim {
                bail!("x0 has {} coordinates but dim is {}", x0.len(), self.dim);
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<BernsteinProfile> {
        self.phi.parse().with_context(|| format!("invalid profile `{}`", self.phi))
    }

    pub fn model(&self) -> Result<LevyModel> {
        let profile = self.profile()?;
        let c = match self.calibration {
            Some(c) => c,
            None if profile.is_pure_power() => stable_levy_constant(self.dim, profile.alpha()),
            None => 1.0,
        };
        LevyModel::new(self.dim, profile, c).with_context(|| format!("invalid model `{}`", self.phi))
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::parse(&self.domain, self.dim).with_context(|| format!("invalid domain `{}`", self.domain))
    }

    /// Simulation settings scaled to the domain, with the configured overrides.
    pub fn sim_config(&self, domain: &Domain) -> SimConfig {
        let base = SimConfig::for_domain(domain);
        SimConfig {
            eps_cut: self.eps.unwrap_or(base.eps_cut),
            gaussian_mode: self.gaussian,
            boundary_cut_ratio: self.boundary_cut_ratio,
            seed: self.seed,
            ..base
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location and
    /// the worker count, which do not affect results.
    pub fn hash(&self) -> String {
        let canonical = Self { out: None, workers: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Reads the optional config file and applies the flag layer on top.
pub fn parse_config(file: Option<&Path>, flags: &ConfigLayer) -> Result<ExperimentConfig> {
    let base = match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ConfigLayer::from_json(&text, &path.display().to_string())?
        }
        None => ConfigLayer::default(),
    };
    ExperimentConfig::from_layer(base.merged(flags))
}
