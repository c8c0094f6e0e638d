//! Path simulation for the ε-truncated process: the free process, the process
//! killed on leaving a domain, and the censored process realised by
//! suppressing jumps that would leave the domain.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Result};
use crate::geometry::Domain;
use crate::kernels::{killing_rate, small_jump_variance, KillingRate, LevyModel, TailTable};
use crate::stats::{par_fold, Diagnostics, Estimate, Moments};

/// Simulation knobs shared by every path of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Jumps shorter than this are dropped (or replaced by diffusion).
    pub eps_cut: f64,
    /// Replace the dropped small jumps by a Gaussian displacement.
    pub gaussian_mode: bool,
    /// Cap on jump events (and diffusion substeps) per path.
    pub max_events: u64,
    /// Boundary-approach tolerance; also bounds the Gaussian substep spread.
    pub eta_stop: f64,
    /// Time cap.
    pub horizon: f64,
    pub seed: u64,
    /// Path i draws from stream i·stride of the seeded generator.
    pub path_index_stride: u64,
    /// Time δ_D < eta_stop must persist before a boundary approach is
    /// declared; defaults to 1% of the horizon.
    pub dwell: Option<f64>,
    /// Depth below which a boundary approach is declared at once; defaults
    /// to 10⁻⁹·eta_stop.
    pub eta_floor: Option<f64>,
    /// When set to θ, the cutoff at x becomes min(eps_cut, θ·δ_D(x)), keeping
    /// the jump resolution proportional to the distance from the boundary.
    pub boundary_cut_ratio: Option<f64>,
    /// Keep the full event log in each record.
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            eps_cut: 2e-3,
            gaussian_mode: false,
            max_events: 50_000_000,
            eta_stop: 2e-3,
            horizon: 1e9,
            seed: 0,
            path_index_stride: 1,
            dwell: None,
            eta_floor: None,
            boundary_cut_ratio: None,
            record_events: false,
        }
    }
}

impl SimConfig {
    /// Defaults scaled to the domain: ε = eta_stop = 10⁻³·diam(D).
    pub fn for_domain(domain: &Domain) -> Self {
        let d = domain.diameter();
        Self { eps_cut: 1e-3 * d, eta_stop: 1e-3 * d, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_cut > 0.0 && self.eps_cut.is_finite()) {
            return config_err(format!("eps_cut must be positive, got {}", self.eps_cut));
        }
        if !(self.eta_stop >= 0.0) {
            return config_err("eta_stop must be nonnegative");
        }
        if !(self.horizon > 0.0) {
            return config_err("horizon must be positive");
        }
        if self.path_index_stride == 0 {
            return config_err("path_index_stride must be at least 1");
        }
        if let Some(th) = self.boundary_cut_ratio {
            if !(th > 0.0 && th <= 1.0) {
                return config_err("boundary_cut_ratio must lie in (0, 1]");
            }
            if self.gaussian_mode {
                return config_err("gaussian_mode needs a fixed cutoff");
            }
        }
        if self.dwell.is_some_and(|d| !(d >= 0.0)) || self.eta_floor.is_some_and(|f| !(f >= 0.0)) {
            return config_err("dwell and eta_floor must be nonnegative");
        }
        Ok(())
    }

    pub fn effective_dwell(&self) -> f64 {
        self.dwell.unwrap_or(0.01 * self.horizon)
    }

    pub fn effective_floor(&self) -> f64 {
        self.eta_floor.unwrap_or(1e-9 * self.eta_stop)
    }

    /// The same configuration with a seed derived from `tag`, for
    /// independent sub-experiments of one run.
    pub fn derived(&self, tag: u64) -> Self {
        Self { seed: derive_seed(self.seed, tag), ..self.clone() }
    }

    /// Generator for path `index`: stream index·stride of the seeded ChaCha8.
    pub fn path_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_mul(self.path_index_stride));
        rng
    }
}

/// SplitMix64 mixing of a seed with a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws jumps with |Δ| > ε from the normalised restriction of j.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    table: Arc<TailTable>,
    n: usize,
}

impl JumpSampler {
    pub fn new(model: &LevyModel) -> Self {
        Self { table: model.tail_table().clone(), n: model.dim() }
    }

    /// Smallest supported cutoff.
    pub fn min_eps(&self) -> f64 {
        self.table.r_min()
    }

    /// ln Λ(ε).
    pub fn log_rate(&self, eps: f64) -> Result<f64> {
        match self.table.log_tail(eps) {
            Some(v) => Ok(v),
            None => config_err(format!("cutoff {eps} is below the tail table range {}", self.min_eps())),
        }
    }

    /// Radius with P(R > r) = Λ(r)/Λ(ε), by inverting the log-log table.
    #[inline]
    pub fn sample_radius<R: Rng + ?Sized>(&self, eps: f64, log_rate: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let r = self.table.radius_for_log_tail((1.0 - u).ln() + log_rate);
        if r > eps { r } else { eps * (1.0 + f64::EPSILON) }
    }

    /// Writes a jump displacement into `out`.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, eps: f64, log_rate: f64, rng: &mut R, out: &mut [f64]) {
        let r = self.sample_radius(eps, log_rate, rng);
        fill_direction(self.n, rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }
}

/// Uniform unit vector written into `out`.
#[inline]
pub fn fill_direction<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut [f64]) {
    match n {
        1 => out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 },
        2 => loop {
            // Rejection from the square keeps trigonometric calls off the hot path.
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let v = 2.0 * rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s <= 1.0 && s > 1e-12 {
                let r = s.sqrt();
                out[0] = u / r;
                out[1] = v / r;
                break;
            }
        },
        _ => loop {
            let mut norm = 0.0;
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
                norm += *v * *v;
            }
            if norm > 1e-300 {
                let norm = norm.sqrt();
                out.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        },
    }
}

/// One ε-truncated jump displacement.
pub fn sample_jump<R: Rng + ?Sized>(model: &LevyModel, eps: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return domain_err("sample_jump needs eps > 0");
    }
    let s = JumpSampler::new(model);
    let lr = s.log_rate(eps)?;
    let mut out = vec![0.0; model.dim()];
    s.sample_into(eps, lr, rng, &mut out);
    Ok(out)
}

/// How a path ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    /// Left the domain (or the stopping set) at time τ from X_{τ−} to X_τ.
    /// In gaussian mode a diffusion substep exit is reported the same way.
    ExitedByJump { tau: f64, pre: Vec<f64>, post: Vec<f64> },
    ReachedHorizon,
    /// Operational proxy for the lifetime of the censored process.
    BoundaryApproach { time: f64 },
    EventCapHit,
}

/// A jump attempt; suppressed attempts leave the position unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub suppressed: bool,
}

/// Summary of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Full event log, kept only with `record_events`.
    pub events: Vec<Event>,
    pub status: PathStatus,
    /// A(t) = ∫₀ᵗ κ(X_s) ds up to the end of the path (0 without a killing rate).
    pub fk_integral: f64,
    pub suppressed_jumps: u64,
    pub n_events: u64,
    pub final_time: f64,
    /// X at the end of the path; X_τ for exits.
    pub final_position: Vec<f64>,
    /// Time of the first suppressed jump, i.e. the exit time of the coupled
    /// killed path.
    pub first_suppression: Option<f64>,
}

/// Which process to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Killed,
    Censored,
}

/// Receives the piecewise-constant sojourns of a path.
pub trait PathObserver {
    /// The path sits at `x` during [t, t + dt); `pristine` is true while no
    /// jump has been suppressed.
    fn hold(&mut self, x: &[f64], t: f64, dt: f64, pristine: bool);
}

impl PathObserver for () {
    #[inline]
    fn hold(&mut self, _: &[f64], _: f64, _: f64, _: bool) {}
}

/// Time spent in the ball B(center, rho), split at the first suppression.
#[derive(Debug, Clone)]
pub struct Occupation {
    pub center: Vec<f64>,
    pub rho: f64,
    pub pristine_time: f64,
    pub total_time: f64,
}

impl Occupation {
    pub fn new(center: &[f64], rho: f64) -> Self {
        Self { center: center.to_vec(), rho, pristine_time: 0.0, total_time: 0.0 }
    }
}

impl PathObserver for Occupation {
    #[inline]
    fn hold(&mut self, x: &[f64], _t: f64, dt: f64, pristine: bool) {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < self.rho * self.rho {
            self.total_time += dt;
            if pristine {
                self.pristine_time += dt;
            }
        }
    }
}

struct State {
    x: Vec<f64>,
    t: f64,
    a: f64,
    events: u64,
    suppressed: u64,
    first_suppression: Option<f64>,
    kappa: Option<f64>,
    log: Vec<Event>,
}

/// Precomputed simulation engine for one model, domain and configuration.
pub struct Simulator {
    domain: Domain,
    cfg: SimConfig,
    sampler: JumpSampler,
    log_rate_cut: f64,
    rate_cut: f64,
    sigma: f64,
    killing: Option<Arc<dyn KillingRate>>,
}

impl Simulator {
    pub fn new(model: &LevyModel, domain: &Domain, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        if model.dim() != domain.dim() {
            return domain_err("model and domain dimensions differ");
        }
        let sampler = JumpSampler::new(model);
        let log_rate_cut = sampler.log_rate(cfg.eps_cut)?;
        let sigma = if cfg.gaussian_mode { small_jump_variance(model, cfg.eps_cut)?.sqrt() } else { 0.0 };
        Ok(Self {
            domain: domain.clone(),
            cfg: cfg.clone(),
            sampler,
            log_rate_cut,
            rate_cut: log_rate_cut.exp(),
            sigma,
            killing: None,
        })
    }

    /// Adds the killing rate κ^ε_D (ε = eps_cut) for Feynman–Kac weights.
    pub fn with_killing(mut self, model: &LevyModel) -> Result<Self> {
        if self.cfg.boundary_cut_ratio.is_some() {
            return config_err("Feynman-Kac weights need a fixed cutoff");
        }
        // The diffusion part never leaves the domain by a jump, so only the
        // truncated jump part contributes to the killing rate.
        self.killing = Some(Arc::from(killing_rate(model, &self.domain, self.cfg.eps_cut)?));
        Ok(self)
    }

    /// Uses an existing killing-rate evaluator.
    pub fn with_killing_rate(mut self, k: Arc<dyn KillingRate>) -> Self {
        self.killing = Some(k);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Λ at the configured cutoff.
    pub fn jump_rate(&self) -> f64 {
        self.rate_cut
    }

    #[inline]
    fn cutoff(&self, delta: f64) -> (f64, f64, f64) {
        match self.cfg.boundary_cut_ratio {
            Some(th) if th * delta < self.cfg.eps_cut => {
                let e = (th * delta).max(self.sampler.min_eps());
                let lr = self.sampler.table.log_tail(e).unwrap_or(self.log_rate_cut);
                (e, lr, lr.exp())
            }
            _ => (self.cfg.eps_cut, self.log_rate_cut, self.rate_cut),
        }
    }

    #[inline]
    fn kappa(&self, st: &mut State) -> f64 {
        match &self.killing {
            None => 0.0,
            Some(k) => *st.kappa.get_or_insert_with(|| k.rate(&st.x)),
        }
    }

    /// Advances the clock by `dt` at the current position; in gaussian mode
    /// the position diffuses in substeps and may exit.
    fn hold<R: Rng + ?Sized, O: PathObserver>(
        &self,
        st: &mut State,
        dt: f64,
        dynamics: Dynamics,
        stop: Option<&Domain>,
        rng: &mut R,
        obs: &mut O,
    ) -> Option<PathStatus> {
        if !self.cfg.gaussian_mode || self.sigma == 0.0 {
            obs.hold(&st.x, st.t, dt, st.first_suppression.is_none());
            st.a += self.kappa(st) * dt;
            st.t += dt;
            return None;
        }
        let h_max = if self.cfg.eta_stop > 0.0 { (self.cfg.eta_stop / self.sigma).powi(2) } else { dt };
        let m = (dt / h_max).ceil().max(1.0) as u64;
        let h = dt / m as f64;
        let sd = self.sigma * h.sqrt();
        let n = st.x.len();
        let mut z = vec![0.0; n];
        let mut mid = vec![0.0; n];
        for _ in 0..m {
            if st.events >= self.cfg.max_events {
                return Some(PathStatus::EventCapHit);
            }
            st.events += 1;
            let mut accepted = false;
            for _attempt in 0..64 {
                for (zi, xi) in z.iter_mut().zip(&st.x) {
                    *zi = xi + sd * rng.sample::<f64, _>(StandardNormal);
                }
                if self.domain.contains(&z) {
                    accepted = true;
                    break;
                }
                if dynamics == Dynamics::Killed {
                    obs.hold(&st.x, st.t, h, true);
                    st.a += self.kappa(st) * h;
                    st.t += h;
                    return Some(PathStatus::ExitedByJump { tau: st.t, pre: st.x.clone(), post: z.clone() });
                }
            }
            obs.hold(&st.x, st.t, h, st.first_suppression.is_none());
            if !accepted {
                st.a += self.kappa(st) * h;
                st.t += h;
                continue;
            }
            if let Some(k) = &self.killing {
                for i in 0..n {
                    mid[i] = 0.5 * (st.x[i] + z[i]);
                }
                let at = if self.domain.contains(&mid) { k.rate(&mid) } else { self.kappa(st) };
                st.a += at * h;
            }
            st.t += h;
            if stop.is_some_and(|b| !b.contains(&z)) {
                return Some(PathStatus::ExitedByJump { tau: st.t, pre: st.x.clone(), post: z.clone() });
            }
            st.x.copy_from_slice(&z);
            st.kappa = None;
        }
        None
    }

    /// Runs one path from `x0`. With `stop = Some(B)` the path ends at the
    /// first move leaving B (B should lie inside the domain).
    pub fn run<R: Rng + ?Sized, O: PathObserver>(
        &self,
        dynamics: Dynamics,
        stop: Option<&Domain>,
        x0: &[f64],
        rng: &mut R,
        obs: &mut O,
    ) -> Result<PathRecord> {
        if x0.len() != self.domain.dim() || !self.domain.contains(x0) {
            return domain_err("starting point must lie inside the domain");
        }
        if stop.is_some_and(|b| !b.contains(x0)) {
            return domain_err("starting point must lie inside the stopping set");
        }
        let cfg = &self.cfg;
        let detect = dynamics == Dynamics::Censored && stop.is_none() && cfg.eta_stop > 0.0;
        let dwell = cfg.effective_dwell();
        let floor = cfg.effective_floor();
        let mut st = State {
            x: x0.to_vec(),
            t: 0.0,
            a: 0.0,
            events: 0,
            suppressed: 0,
            first_suppression: None,
            kappa: None,
            log: Vec::new(),
        };
        let mut near_since: Option<f64> = None;
        let mut y = vec![0.0; x0.len()];
        let need_depth = detect || cfg.boundary_cut_ratio.is_some();
        let status = loop {
            let delta = if need_depth { self.domain.dist_to_boundary(&st.x) } else { f64::INFINITY };
            let (eps, log_rate, rate) = self.cutoff(delta);
            let e: f64 = rng.sample(Exp1);
            let dt = e / rate;
            if detect {
                if delta < cfg.eta_stop {
                    let trigger = *near_since.get_or_insert(st.t) + dwell;
                    if trigger <= (st.t + dt).min(cfg.horizon) {
                        let rest = (trigger - st.t).max(0.0);
                        if let Some(s) = self.hold(&mut st, rest, dynamics, stop, rng, obs) {
                            break s;
                        }
                        break PathStatus::BoundaryApproach { time: trigger };
                    }
                } else {
                    near_since = None;
                }
            }
            if st.t + dt >= cfg.horizon {
                let rest = cfg.horizon - st.t;
                if let Some(s) = self.hold(&mut st, rest, dynamics, stop, rng, obs) {
                    break s;
                }
                st.t = cfg.horizon;
                break PathStatus::ReachedHorizon;
            }
            if let Some(s) = self.hold(&mut st, dt, dynamics, stop, rng, obs) {
                break s;
            }
            if st.events >= cfg.max_events {
                break PathStatus::EventCapHit;
            }
            st.events += 1;
            self.sampler.sample_into(eps, log_rate, rng, &mut y);
            for (yi, xi) in y.iter_mut().zip(&st.x) {
                *yi += xi;
            }
            if !self.domain.contains(&y) {
                if dynamics == Dynamics::Killed {
                    if cfg.record_events {
                        st.log.push(Event { time: st.t, before: st.x.clone(), after: y.clone(), suppressed: false });
                    }
                    break PathStatus::ExitedByJump { tau: st.t, pre: st.x.clone(), post: y.clone() };
                }
                st.suppressed += 1;
                st.first_suppression.get_or_insert(st.t);
                if cfg.record_events {
                    st.log.push(Event { time: st.t, before: st.x.clone(), after: st.x.clone(), suppressed: true });
                }
                continue;
            }
            if cfg.record_events {
                st.log.push(Event { time: st.t, before: st.x.clone(), after: y.clone(), suppressed: false });
            }
            if stop.is_some_and(|b| !b.contains(&y)) {
                break PathStatus::ExitedByJump { tau: st.t, pre: st.x.clone(), post: y.clone() };
            }
            st.x.copy_from_slice(&y);
            st.kappa = None;
            if detect && self.domain.dist_to_boundary(&st.x) < floor {
                break PathStatus::BoundaryApproach { time: st.t };
            }
        };
        let final_position = match &status {
            PathStatus::ExitedByJump { post, .. } => post.clone(),
            _ => st.x.clone(),
        };
        Ok(PathRecord {
            events: st.log,
            status,
            fk_integral: st.a,
            suppressed_jumps: st.suppressed,
            n_events: st.events,
            final_time: st.t,
            final_position,
            first_suppression: st.first_suppression,
        })
    }

    /// Killed path of path index `index` under the configured seed.
    pub fn killed(&self, x0: &[f64], index: u64) -> Result<PathRecord> {
        self.run(Dynamics::Killed, None, x0, &mut self.cfg.path_rng(index), &mut ())
    }

    /// Censored path of path index `index` under the configured seed.
    pub fn censored(&self, x0: &[f64], index: u64) -> Result<PathRecord> {
        self.run(Dynamics::Censored, None, x0, &mut self.cfg.path_rng(index), &mut ())
    }
}

/// Runs X killed on leaving `b`.
pub fn run_killed<R: Rng + ?Sized>(
    model: &LevyModel,
    b: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    Simulator::new(model, b, cfg)?.run(Dynamics::Killed, None, x0, rng, &mut ())
}

/// Runs the censored process on `d` by jump suppression.
pub fn run_censored_inw<R: Rng + ?Sized>(
    model: &LevyModel,
    d: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    Simulator::new(model, d, cfg)?.run(Dynamics::Censored, None, x0, rng, &mut ())
}

/// (Y_{τ−}, Y_τ) for the censored process on `d` leaving `b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitPair {
    pub tau: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

/// Runs the censored process on `d` until its first move out of `b`.
/// Returns `None` for paths that reach the horizon or the event cap.
pub fn exit_via_censored<R: Rng + ?Sized>(
    model: &LevyModel,
    d: &Domain,
    b: &Domain,
    x0: &[f64],
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Option<ExitPair>> {
    if !d.encloses(b) {
        return domain_err("the closure of the stopping set must lie inside the domain");
    }
    let rec = Simulator::new(model, d, cfg)?.run(Dynamics::Censored, Some(b), x0, rng, &mut ())?;
    Ok(match rec.status {
        PathStatus::ExitedByJump { tau, pre, post } => Some(ExitPair { tau, pre, post }),
        _ => None,
    })
}

/// E_x0[exp(A(t))·f(X_t^D); t < τ_D] with A built from κ^ε_D.
/// Paths with A(t) > 700 are excluded and counted as overflow.
pub fn fk_functional<F>(
    model: &LevyModel,
    d: &Domain,
    x0: &[f64],
    t: f64,
    f: &F,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(t > 0.0) {
        return domain_err("time must be positive");
    }
    let cfg = SimConfig { horizon: t, ..cfg.clone() };
    let sim = Simulator::new(model, d, &cfg)?.with_killing(model)?;
    fk_functional_with(&sim, x0, f, n_paths)
}

/// [`fk_functional`] on a prepared simulator (whose horizon is t).
pub fn fk_functional_with<F>(sim: &Simulator, x0: &[f64], f: &F, n_paths: u64) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(fk_battery_with(sim, x0, &[f], n_paths)?[0])
}

/// A test function of a battery evaluated on shared paths.
pub type TestFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Feynman–Kac estimates of several test functions from the same paths.
pub fn fk_battery(
    model: &LevyModel,
    d: &Domain,
    x0: &[f64],
    t: f64,
    fs: &[TestFn<'_>],
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<Estimate>> {
    if !(t > 0.0) {
        return domain_err("time must be positive");
    }
    let cfg = SimConfig { horizon: t, ..cfg.clone() };
    let sim = Simulator::new(model, d, &cfg)?.with_killing(model)?;
    fk_battery_with(&sim, x0, fs, n_paths)
}

/// [`fk_battery`] on a prepared simulator (whose horizon is t).
pub fn fk_battery_with<F>(sim: &Simulator, x0: &[f64], fs: &[F], n_paths: u64) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if sim.killing.is_none() {
        return config_err("simulator has no killing rate");
    }
    if !sim.domain.contains(x0) {
        return domain_err("starting point must lie inside the domain");
    }
    let (m, diag) = par_fold(
        n_paths,
        || (vec![Moments::default(); fs.len()], Diagnostics::default()),
        |(mut m, mut dg), i| {
            let rec = sim
                .run(Dynamics::Killed, None, x0, &mut sim.cfg.path_rng(i), &mut ())
                .expect("validated start");
            match rec.status {
                PathStatus::ReachedHorizon if rec.fk_integral > 700.0 => dg.overflow += 1,
                PathStatus::ReachedHorizon => {
                    let w = rec.fk_integral.exp();
                    m.iter_mut().zip(fs).for_each(|(m, f)| m.push(w * f(&rec.final_position)));
                }
                PathStatus::EventCapHit => dg.capped += 1,
                _ => m.iter_mut().for_each(|m| m.push(0.0)),
            }
            (m, dg)
        },
        merge_battery,
    );
    Ok(m.iter().map(|m| m.estimate(diag)).collect())
}

fn merge_battery(
    (a, da): (Vec<Moments>, Diagnostics),
    (b, db): (Vec<Moments>, Diagnostics),
) -> (Vec<Moments>, Diagnostics) {
    (a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(), da.merge(db))
}

/// E_x0[f(Y_t)] for the censored process realised by jump suppression.
pub fn censored_functional<F>(
    model: &LevyModel,
    d: &Domain,
    x0: &[f64],
    t: f64,
    f: &F,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(censored_battery(model, d, x0, t, &[f], cfg, n_paths)?[0])
}

/// [`censored_functional`] for several test functions on shared paths.
pub fn censored_battery<F>(
    model: &LevyModel,
    d: &Domain,
    x0: &[f64],
    t: f64,
    fs: &[F],
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(t > 0.0) {
        return domain_err("time must be positive");
    }
    // Boundary detection would stop paths early; E f(Y_t) needs the whole path.
    let cfg = SimConfig { horizon: t, eta_stop: 0.0, ..cfg.clone() };
    let sim = Simulator::new(model, d, &cfg)?;
    if !d.contains(x0) {
        return domain_err("starting point must lie inside the domain");
    }
    let (m, diag) = par_fold(
        n_paths,
        || (vec![Moments::default(); fs.len()], Diagnostics::default()),
        |(mut m, mut dg), i| {
            let rec = sim
                .run(Dynamics::Censored, None, x0, &mut sim.cfg.path_rng(i), &mut ())
                .expect("validated start");
            dg.censored_jumps += rec.suppressed_jumps;
            match rec.status {
                PathStatus::ReachedHorizon => m.iter_mut().zip(fs).for_each(|(m, f)| m.push(f(&rec.final_position))),
                _ => dg.capped += 1,
            }
            (m, dg)
        },
        merge_battery,
    );
    Ok(m.iter().map(|m| m.estimate(diag)).collect())
}
