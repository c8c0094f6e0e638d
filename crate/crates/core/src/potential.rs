//! Monte Carlo estimators built on path simulation: Green functions of the
//! killed and censored processes, exit distributions, harmonic extensions,
//! the capped g-function and the conditional gauge.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{domain_err, precondition_err, Result};
use crate::geometry::{Domain, Shape};
use crate::kernels::{big_phi, dist, unit_ball_volume, LevyModel};
use crate::oracle;
use crate::pathsim::{Dynamics, Occupation, PathStatus, SimConfig, Simulator};
use crate::stats::{par_fold, Diagnostics, Estimate, Moments, PairedMoments};

fn check_green_pair(b: &Domain, x: &[f64], y: &[f64], rho: f64) -> Result<f64> {
    if !b.contains(x) || !b.contains(y) {
        return domain_err("Green estimates need interior points");
    }
    let d = dist(x, y);
    if d == 0.0 {
        return precondition_err("Green estimates need x ≠ y");
    }
    if !(rho > 0.0) || rho > d / 4.0 {
        return precondition_err(format!("rho = {rho} must lie in (0, |x-y|/4 = {}]", d / 4.0));
    }
    if b.dist_to_boundary(y) < rho {
        return precondition_err("the averaging ball B(y, rho) must lie inside the domain");
    }
    Ok(d)
}

/// Default averaging radius: |x−y|/8, shrunk to keep B(y,ρ) inside B.
pub fn default_rho(b: &Domain, x: &[f64], y: &[f64]) -> f64 {
    (dist(x, y) / 8.0).min(0.5 * b.dist_to_boundary(y))
}

/// ρ-averaged Green function of X killed on leaving `b`:
/// E_x[time in B(y,ρ) before τ_B] / |B(y,ρ)|.
pub fn estimate_green_pair(
    model: &LevyModel,
    b: &Domain,
    x: &[f64],
    y: &[f64],
    rho: f64,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<Estimate> {
    check_green_pair(b, x, y, rho)?;
    let sim = Simulator::new(model, b, cfg)?;
    let vol = unit_ball_volume(model.dim()) * rho.powi(model.dim() as i32);
    let (m, dg) = par_fold(
        n_paths,
        || (Moments::default(), Diagnostics::default()),
        |(mut m, mut dg), i| {
            let mut occ = Occupation::new(y, rho);
            let rec = sim
                .run(Dynamics::Killed, None, x, &mut sim.config().path_rng(i), &mut occ)
                .expect("validated start");
            if !matches!(rec.status, PathStatus::ExitedByJump { .. }) {
                dg.capped += 1;
            }
            m.push(occ.total_time / vol);
            (m, dg)
        },
        |(a, da), (b, db)| (a.merge(b), da.merge(db)),
    );
    Ok(m.estimate(dg))
}

fn check_nested(d: &Domain, b: &Domain) -> Result<()> {
    if !d.encloses(b) {
        return precondition_err("the closure of B must lie inside D");
    }
    Ok(())
}

/// Killed and censored occupation of B(y,ρ) from one set of censored paths
/// on D stopped on leaving B. The killed path is the censored path up to
/// its first suppressed jump, so both estimates share their randomness.
fn paired_occupation(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    x: &[f64],
    y: &[f64],
    rho: f64,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<(PairedMoments, Diagnostics)> {
    check_green_pair(b, x, y, rho)?;
    check_nested(d, b)?;
    let sim = Simulator::new(model, d, cfg)?;
    let vol = unit_ball_volume(model.dim()) * rho.powi(model.dim() as i32);
    Ok(par_fold(
        n_paths,
        || (PairedMoments::default(), Diagnostics::default()),
        |(mut m, mut dg), i| {
            let mut occ = Occupation::new(y, rho);
            let rec = sim
                .run(Dynamics::Censored, Some(b), x, &mut sim.config().path_rng(i), &mut occ)
                .expect("validated start");
            if !matches!(rec.status, PathStatus::ExitedByJump { .. }) {
                dg.capped += 1;
            }
            dg.censored_jumps += rec.suppressed_jumps;
            m.push(occ.total_time / vol, occ.pristine_time / vol);
            (m, dg)
        },
        |(a, da), (b, db)| (a.merge(b), da.merge(db)),
    ))
}

/// ρ-averaged Green function of the censored process on D killed on leaving B.
pub fn estimate_green_censored(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    x: &[f64],
    y: &[f64],
    rho: f64,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<Estimate> {
    let (m, dg) = paired_occupation(model, d, b, x, y, rho, n_paths, cfg)?;
    Ok(m.a.estimate(dg))
}

/// Conditional gauge u(x,y) = G^Y_B(x,y)/G_B(x,y) with both Green functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeEstimate {
    pub u: Estimate,
    pub green_censored: Estimate,
    pub green_killed: Estimate,
    /// The killed Green estimate is within 3σ of zero, so the ratio is unreliable.
    pub indeterminate: bool,
}

/// Estimates u(x,y) as a ratio of occupation estimates from shared paths,
/// with a delta-method standard error.
pub fn estimate_gauge(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    x: &[f64],
    y: &[f64],
    rho: f64,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<GaugeEstimate> {
    let (m, dg) = paired_occupation(model, d, b, x, y, rho, n_paths, cfg)?;
    let killed = m.b.estimate(dg);
    Ok(GaugeEstimate {
        u: m.ratio(dg),
        green_censored: m.a.estimate(dg),
        green_killed: killed,
        indeterminate: killed.indistinguishable_from_zero(3.0),
    })
}

/// Radial and angular bins of the exit position, centred at `center`.
/// Angular bins are used in two dimensions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitMesh {
    pub center: Vec<f64>,
    /// Increasing radii; the last bin extends to infinity.
    pub radii: Vec<f64>,
    pub angular_bins: usize,
}

/// Histogram of X_{τ_B}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitHistogram {
    pub mesh: ExitMesh,
    /// masses[radial][angular]: fraction of all paths.
    pub masses: Vec<Vec<Estimate>>,
    /// Fraction of paths that never exited (event cap or horizon).
    pub capped_fraction: f64,
    pub n_paths: u64,
}

impl ExitHistogram {
    /// Radial marginals.
    pub fn radial_masses(&self) -> Vec<f64> {
        self.masses.iter().map(|row| row.iter().map(|e| e.value).sum()).collect()
    }

    /// Sum over all bins; 1 minus the capped fraction.
    pub fn total(&self) -> f64 {
        self.radial_masses().iter().sum()
    }
}

/// Histogram of the exit position of X killed on leaving `b`, started at x.
pub fn exit_distribution(
    model: &LevyModel,
    b: &Domain,
    x: &[f64],
    mesh: &ExitMesh,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<ExitHistogram> {
    if mesh.radii.is_empty() || mesh.radii.windows(2).any(|w| !(w[1] > w[0])) || mesh.angular_bins == 0 {
        return domain_err("exit mesh needs increasing radii and at least one angular bin");
    }
    if mesh.center.len() != model.dim() {
        return domain_err("exit mesh centre has the wrong dimension");
    }
    let sim = Simulator::new(model, b, cfg)?;
    if !b.contains(x) {
        return domain_err("starting point must lie inside the domain");
    }
    let nr = mesh.radii.len();
    let na = if model.dim() == 2 { mesh.angular_bins } else { 1 };
    let counts = par_fold(
        n_paths,
        || vec![0u64; nr * na + 1],
        |mut c, i| {
            let rec = sim.killed(x, i).expect("validated start");
            match rec.status {
                PathStatus::ExitedByJump { post, .. } => {
                    let v: Vec<f64> = post.iter().zip(&mesh.center).map(|(p, c)| p - c).collect();
                    let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    // Radial bin k covers [radii[k], radii[k+1]); below radii[0] joins bin 0.
                    let k = mesh.radii.partition_point(|&e| e <= r).saturating_sub(1);
                    let a = if na > 1 {
                        let t = v[1].atan2(v[0]).rem_euclid(std::f64::consts::TAU);
                        ((t / std::f64::consts::TAU * na as f64) as usize).min(na - 1)
                    } else {
                        0
                    };
                    c[k * na + a] += 1;
                }
                _ => c[nr * na] += 1,
            }
            c
        },
        |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        },
    );
    let n = n_paths as f64;
    let masses = (0..nr)
        .map(|k| {
            (0..na)
                .map(|a| {
                    let p = counts[k * na + a] as f64 / n;
                    Estimate {
                        value: p,
                        stderr: (p * (1.0 - p) / n).sqrt(),
                        n_paths,
                        diagnostics: Diagnostics::default(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(ExitHistogram { mesh: mesh.clone(), masses, capped_fraction: counts[nr * na] as f64 / n, n_paths })
}

/// Classical exit masses of the radial bins for the calibrated stable
/// process started at the centre of a ball (angular bins are uniform).
pub fn oracle_radial_exit_masses(alpha: f64, radius: f64, radii: &[f64]) -> Result<Vec<f64>> {
    let tail = |r: f64| oracle::exit_radius_tail_from_center(alpha, radius, r);
    let mut out = Vec::with_capacity(radii.len());
    for k in 0..radii.len() {
        let lo = tail(radii[k])?;
        let hi = if k + 1 < radii.len() { tail(radii[k + 1])? } else { 0.0 };
        out.push(lo - hi);
    }
    Ok(out)
}

/// E_x[h(X_{τ_B})].
pub fn harmonic_eval_x<H>(
    model: &LevyModel,
    b: &Domain,
    h: &H,
    x: &[f64],
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<Estimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    let sim = Simulator::new(model, b, cfg)?;
    if !b.contains(x) {
        return domain_err("starting point must lie inside the domain");
    }
    let (m, dg) = par_fold(
        n_paths,
        || (Moments::default(), Diagnostics::default()),
        |(mut m, mut dg), i| {
            match sim.killed(x, i).expect("validated start").status {
                PathStatus::ExitedByJump { post, .. } => m.push(h(&post)),
                _ => dg.capped += 1,
            }
            (m, dg)
        },
        |(a, da), (b, db)| (a.merge(b), da.merge(db)),
    );
    Ok(m.estimate(dg))
}

/// E_x[h(Y_{τ_B})] for the censored process on D; h vanishes off D.
pub fn harmonic_eval_y<H>(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    h: &H,
    x: &[f64],
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<Estimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    check_nested(d, b)?;
    if !b.contains(x) {
        return domain_err("starting point must lie inside B");
    }
    let sim = Simulator::new(model, d, cfg)?;
    let (m, dg) = par_fold(
        n_paths,
        || (Moments::default(), Diagnostics::default()),
        |(mut m, mut dg), i| {
            let rec = sim
                .run(Dynamics::Censored, Some(b), x, &mut sim.config().path_rng(i), &mut ())
                .expect("validated start");
            dg.censored_jumps += rec.suppressed_jumps;
            match rec.status {
                PathStatus::ExitedByJump { post, .. } => m.push(if d.contains(&post) { h(&post) } else { 0.0 }),
                _ => dg.capped += 1,
            }
            (m, dg)
        },
        |(a, da), (b, db)| (a.merge(b), da.merge(db)),
    );
    Ok(m.estimate(dg))
}

/// The capped g-function g(x) = min(G_B(x, z0), c₅·Φ(δ_B(z0))/δ_B(z0)ⁿ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFunctionSpec {
    pub z0: Vec<f64>,
    pub c5: f64,
    pub cap: f64,
}

impl GFunctionSpec {
    pub fn new(model: &LevyModel, b: &Domain, c5: f64) -> Result<Self> {
        let z0 = b.reference_point()?;
        let depth = b.dist_to_boundary(&z0);
        let cap = c5 * big_phi(model.profile(), depth)? / depth.powi(model.dim() as i32);
        Ok(Self { z0, c5, cap })
    }

    /// c₅ = 2ⁿ·ĉ₁ from a fitted Green upper-bound constant ĉ₁.
    pub fn from_fitted_c1(model: &LevyModel, b: &Domain, c1: f64) -> Result<Self> {
        Self::new(model, b, 2f64.powi(model.dim() as i32) * c1)
    }

    /// Applies the cap to a Green value.
    pub fn apply(&self, green: f64) -> f64 {
        green.min(self.cap)
    }
}

/// g(x) from a Monte Carlo estimate of G_B(x, z0); the cap is applied after
/// estimation and a capped value carries zero standard error.
pub fn g_function(
    model: &LevyModel,
    b: &Domain,
    spec: &GFunctionSpec,
    x: &[f64],
    rho: f64,
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<Estimate> {
    if dist(x, &spec.z0) == 0.0 {
        return precondition_err("g_function needs x ≠ z0");
    }
    let g = estimate_green_pair(model, b, x, &spec.z0, rho, n_paths, cfg)?;
    Ok(cap_estimate(g, spec.cap))
}

fn cap_estimate(g: Estimate, cap: f64) -> Estimate {
    if g.value > cap {
        Estimate { value: cap, stderr: 0.0, ..g }
    } else {
        g
    }
}

/// Mean exit time of the censored process from B, with the capped fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitTimeEstimate {
    pub mean: Estimate,
    pub capped_fraction: f64,
    /// More than 1% of the paths did not exit.
    pub warning: bool,
}

/// E_x[τ^Y_B] for the censored process on D.
pub fn expected_exit_time_y(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    x: &[f64],
    n_paths: u64,
    cfg: &SimConfig,
) -> Result<ExitTimeEstimate> {
    check_nested(d, b)?;
    if !b.contains(x) {
        return domain_err("starting point must lie inside B");
    }
    let sim = Simulator::new(model, d, cfg)?;
    let (m, dg) = par_fold(
        n_paths,
        || (Moments::default(), Diagnostics::default()),
        |(mut m, mut dg), i| {
            let rec = sim
                .run(Dynamics::Censored, Some(b), x, &mut sim.config().path_rng(i), &mut ())
                .expect("validated start");
            match rec.status {
                PathStatus::ExitedByJump { tau, .. } => m.push(tau),
                _ => dg.capped += 1,
            }
            (m, dg)
        },
        |(a, da), (b, db)| (a.merge(b), da.merge(db)),
    );
    let capped_fraction = dg.capped as f64 / n_paths.max(1) as f64;
    Ok(ExitTimeEstimate { mean: m.estimate(dg), capped_fraction, warning: capped_fraction > 0.01 })
}

/// A source of Green-function values G_B(x, y) on a fixed domain.
pub trait GreenSource: Sync {
    fn domain(&self) -> &Domain;
    fn green(&self, x: &[f64], y: &[f64]) -> Result<Estimate>;
}

/// Exact classical Green function of a ball for the stable model, rescaled
/// by A(n,α)/c_cal to the model's calibration.
#[derive(Debug, Clone)]
pub struct OracleGreen {
    domain: Domain,
    n: usize,
    alpha: f64,
    scale: f64,
}

impl OracleGreen {
    pub fn new(model: &LevyModel, b: &Domain) -> Result<Self> {
        if !model.profile().is_pure_power() {
            return domain_err("the classical Green function exists for the stable family only");
        }
        let alpha = model.profile().alpha();
        if !matches!(b.shape(), Shape::Ball { .. }) || alpha >= model.dim() as f64 {
            return domain_err("the classical Green function needs a ball and α < n");
        }
        let scale = oracle::stable_levy_constant(model.dim(), alpha) / model.calibration();
        Ok(Self { domain: b.clone(), n: model.dim(), alpha, scale })
    }
}

impl GreenSource for OracleGreen {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Uses ∫₀^z t^{a−1}(1+t)^{−n/2} dt = B(a,b)·I_{z/(1+z)}(a,b), a = α/2,
    /// b = (n−α)/2, evaluated with statrs; `oracle::ball_green` is the
    /// quadrature route for the same quantity.
    fn green(&self, x: &[f64], y: &[f64]) -> Result<Estimate> {
        let Shape::Ball { center, radius } = self.domain.shape() else { unreachable!() };
        let sq = |p: &[f64]| p.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum::<f64>();
        let r2 = radius * radius;
        let (xx, yy) = (sq(x), sq(y));
        if xx >= r2 || yy >= r2 {
            return Ok(Estimate::exact(0.0));
        }
        let d = dist(x, y);
        if d == 0.0 {
            return domain_err("Green function is infinite on the diagonal");
        }
        let z = (r2 - xx) * (r2 - yy) / (r2 * d * d);
        let (a, b) = (0.5 * self.alpha, 0.5 * (self.n as f64 - self.alpha));
        let profile = ln_beta(a, b).exp() * beta_reg(a, b, z / (1.0 + z));
        Ok(Estimate::exact(
            self.scale * oracle::green_constant(self.n, self.alpha) * d.powf(self.alpha - self.n as f64) * profile,
        ))
    }
}

/// Monte Carlo Green values with the default averaging radius.
pub struct MonteCarloGreen {
    pub model: LevyModel,
    pub domain: Domain,
    pub cfg: SimConfig,
    pub n_paths: u64,
}

impl GreenSource for MonteCarloGreen {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn green(&self, x: &[f64], y: &[f64]) -> Result<Estimate> {
        let rho = default_rho(&self.domain, x, y);
        // Distinct pairs get distinct substreams.
        let tag = x.iter().chain(y).fold(0u64, |h, v| h.rotate_left(7) ^ v.to_bits());
        estimate_green_pair(&self.model, &self.domain, x, y, rho, self.n_paths, &self.cfg.derived(tag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_masses_sum_to_one() {
        let m = oracle_radial_exit_masses(1.0, 1.0, &[1.0, 1.5, 2.0, 4.0]).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn oracle_green_matches_the_quadrature_route() {
        for (n, alpha) in [(2usize, 0.8), (2, 1.2), (2, 1.5), (3, 1.0), (1, 0.6)] {
            let c = vec![0.0; n];
            let b = Domain::ball(c.clone(), 1.0).unwrap();
            let model = LevyModel::calibrated_stable(n, alpha).unwrap();
            let g = OracleGreen::new(&model, &b).unwrap();
            let mut x = vec![0.0; n];
            let mut y = vec![0.0; n];
            for (px, py) in [(-0.3, 0.3), (0.1, 0.9), (0.0, 0.05), (-0.95, 0.97)] {
                x[0] = px;
                y[0] = py;
                let fast = g.green(&x, &y).unwrap().value;
                let slow = oracle::ball_green(n, alpha, &c, 1.0, &x, &y).unwrap();
                assert!((fast - slow).abs() <= 1e-9 * slow, "n={n} α={alpha}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn cap_is_applied_after_estimation() {
        let g = Estimate { value: 3.0, stderr: 0.1, n_paths: 10, diagnostics: Diagnostics::default() };
        assert_eq!(cap_estimate(g, 2.0).value, 2.0);
        assert_eq!(cap_estimate(g, 5.0), g);
    }

    #[test]
    fn green_preconditions() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(check_green_pair(&b, &[0.0, 0.0], &[0.4, 0.0], 0.2).is_err());
        assert!(check_green_pair(&b, &[0.0, 0.0], &[0.4, 0.0], 0.1).is_ok());
        assert!(check_green_pair(&b, &[0.0, 0.0], &[0.0, 0.0], 0.1).is_err());
        assert!(check_green_pair(&b, &[0.0, 0.0], &[0.98, 0.0], 0.05).is_err());
    }
}
