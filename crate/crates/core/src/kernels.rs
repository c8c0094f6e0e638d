//! Analytic kernel quantities of the model: the Bernstein profile φ, the
//! scale function Φ, the radial Lévy density j, jump tail masses, the
//! small-jump variance, the killing density κ_D and the scaling exponents.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{config_err, domain_err, Error, Result};
use crate::geometry::{Domain, Shape};
use crate::quad::{self, QuadOptions};

/// Surface area of the unit sphere S^{n-1} (2 for n = 1).
pub fn unit_sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

/// A complete Bernstein function from one of the supported parametric families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BernsteinProfile {
    /// φ(λ) = λ^{α/2}
    Stable { alpha: f64 },
    /// φ(λ) = λ^{α/2} + λ^{β/2}, 0 < β < α < 2
    StableSum { alpha: f64, beta: f64 },
    /// φ(λ) = λ^{α/2} · log(1+λ)^γ
    StableLog { alpha: f64, gamma: f64 },
}

impl BernsteinProfile {
    pub fn stable(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Stable { alpha })
    }

    pub fn stable_sum(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_alpha(beta)?;
        if beta >= alpha {
            return domain_err(format!("stablesum needs beta < alpha, got beta={beta}, alpha={alpha}"));
        }
        Ok(Self::StableSum { alpha, beta })
    }

    /// Rejects γ for which the fitted scaling exponents leave (0, 1).
    pub fn stable_log(alpha: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !gamma.is_finite() {
            return domain_err("stablelog gamma must be finite");
        }
        let p = Self::StableLog { alpha, gamma };
        let est = estimate_scaling_exponents(&p, &ScalingGrid::default())?;
        if !est.valid {
            return config_err(format!(
                "stablelog(alpha={alpha}, gamma={gamma}) violates (H1)/(H2): fitted exponents {:?}",
                [est.delta1, est.delta2, est.delta3, est.delta4]
            ));
        }
        Ok(p)
    }

    /// The stability index of the leading power (α for all families).
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Stable { alpha } | Self::StableSum { alpha, .. } | Self::StableLog { alpha, .. } => alpha,
        }
    }

    pub fn is_pure_power(&self) -> bool {
        matches!(self, Self::Stable { .. })
    }

    /// Evaluates φ(λ) without argument checks.
    #[inline]
    pub fn eval(&self, lam: f64) -> f64 {
        match *self {
            Self::Stable { alpha } => lam.powf(0.5 * alpha),
            Self::StableSum { alpha, beta } => lam.powf(0.5 * alpha) + lam.powf(0.5 * beta),
            Self::StableLog { alpha, gamma } => lam.powf(0.5 * alpha) * lam.ln_1p().powf(gamma),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return domain_err(format!("violates (H1): the scaling exponent α/2 must lie in (0, 1), got α = {alpha}"));
    }
    Ok(())
}

impl fmt::Display for BernsteinProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Stable { alpha } => write!(f, "stable:alpha={alpha}"),
            Self::StableSum { alpha, beta } => write!(f, "stablesum:alpha={alpha},beta={beta}"),
            Self::StableLog { alpha, gamma } => write!(f, "stablelog:alpha={alpha},gamma={gamma}"),
        }
    }
}

impl FromStr for BernsteinProfile {
    type Err = Error;

    /// Parses `stable:alpha=1.2`, `stablesum:alpha=1.4,beta=0.6`,
    /// `stablelog:alpha=1.0,gamma=0.2`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("profile `{s}` lacks `family:` prefix")))?;
        let kv = parse_kv(rest)?;
        let get = |key: &str| -> Result<f64> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Parse(format!("profile `{s}` is missing `{key}`")))
        };
        let allowed: &[&str] = match family.trim() {
            "stable" => &["alpha"],
            "stablesum" => &["alpha", "beta"],
            "stablelog" => &["alpha", "gamma"],
            other => return Err(Error::Parse(format!("unknown profile family `{other}`"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown key `{k}` in profile `{s}`")));
        }
        match family.trim() {
            "stable" => Self::stable(get("alpha")?),
            "stablesum" => Self::stable_sum(get("alpha")?, get("beta")?),
            _ => Self::stable_log(get("alpha")?, get("gamma")?),
        }
    }
}

pub(crate) fn parse_kv(s: &str) -> Result<Vec<(String, f64)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{p}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{v}` is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// φ(λ) for λ > 0.
pub fn phi(profile: &BernsteinProfile, lam: f64) -> Result<f64> {
    if !(lam > 0.0) {
        return domain_err(format!("phi needs a positive argument, got {lam}"));
    }
    Ok(profile.eval(lam))
}

/// Φ(r) = 1/φ(r⁻²) for r > 0.
pub fn big_phi(profile: &BernsteinProfile, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return domain_err(format!("big_phi needs a positive argument, got {r}"));
    }
    Ok(1.0 / profile.eval(r.powi(-2)))
}

/// The canonical model: dimension, profile and the calibration multiplier of
/// j(r) = c_cal·φ(r⁻²)/rⁿ. Construction precomputes the jump tail table.
#[derive(Clone)]
pub struct LevyModel {
    n: usize,
    profile: BernsteinProfile,
    calibration: f64,
    /// Comparability constant between J_X and j; 1 for the canonical model.
    pub gamma1: f64,
    /// Comparability constant between ψ and φ(|ξ|²); informational.
    pub gamma2: f64,
    tail: Arc<TailTable>,
}

impl fmt::Debug for LevyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyModel")
            .field("n", &self.n)
            .field("profile", &self.profile)
            .field("calibration", &self.calibration)
            .finish()
    }
}

impl PartialEq for LevyModel {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.profile == other.profile && self.calibration == other.calibration
    }
}

/// Range of radii covered by every model's tail table.
const TAIL_R_MIN: f64 = 1e-13;
const TAIL_R_MAX: f64 = 1e7;
const TAIL_KNOTS_PER_DECADE: f64 = 128.0;

impl LevyModel {
    pub fn new(n: usize, profile: BernsteinProfile, calibration: f64) -> Result<Self> {
        if n == 0 {
            return domain_err("dimension must be at least 1");
        }
        if !(calibration > 0.0 && calibration.is_finite()) {
            return domain_err(format!("calibration must be positive, got {calibration}"));
        }
        let mut model = Self {
            n,
            profile,
            calibration,
            gamma1: 1.0,
            gamma2: 1.0,
            tail: Arc::new(TailTable::empty()),
        };
        model.tail = Arc::new(TailTable::build(&model, TAIL_R_MIN, TAIL_R_MAX)?);
        Ok(model)
    }

    /// Stable(α) with c_cal chosen so that j equals the standard α-stable
    /// density A(n,α)|x|^{-n-α} (characteristic exponent |ξ|^α).
    pub fn calibrated_stable(n: usize, alpha: f64) -> Result<Self> {
        let profile = BernsteinProfile::stable(alpha)?;
        Self::new(n, profile, crate::oracle::stable_levy_constant(n, alpha))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> &BernsteinProfile {
        &self.profile
    }

    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    pub fn tail_table(&self) -> &Arc<TailTable> {
        &self.tail
    }

    /// j(r) without checks.
    #[inline]
    pub fn density_unchecked(&self, r: f64) -> f64 {
        self.calibration * self.profile.eval(r.powi(-2)) / r.powi(self.n as i32)
    }

    /// Fast Λ(r) from the tail table; falls back to quadrature off-table.
    #[inline]
    pub fn tail_fast(&self, r: f64) -> f64 {
        if r == f64::INFINITY {
            return 0.0;
        }
        match self.tail.log_tail(r) {
            Some(l) => l.exp(),
            None => tail_mass(self, r).unwrap_or(f64::NAN),
        }
    }
}

/// j(r) = c_cal·φ(r⁻²)/rⁿ.
pub fn levy_density(model: &LevyModel, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return domain_err(format!("levy_density needs r > 0, got {r}"));
    }
    Ok(model.density_unchecked(r))
}

/// Λ(ε) = ω_{n-1}∫_ε^∞ j(r) r^{n-1} dr, the jump rate of the ε-truncated process.
pub fn tail_mass(model: &LevyModel, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return domain_err(format!("tail_mass needs eps > 0, got {eps}"));
    }
    let n = model.n as i32;
    let r = quad::integrate_to_infinity(
        |s| model.density_unchecked(s) * s.powi(n - 1),
        eps,
        QuadOptions::rel(1e-10),
    )?;
    Ok(unit_sphere_area(model.n) * r.value)
}

/// Per-coordinate variance rate of the suppressed jumps, (1/n)∫_{|x|≤ε}|x|²j(|x|)dx.
pub fn small_jump_variance(model: &LevyModel, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return domain_err(format!("small_jump_variance needs eps > 0, got {eps}"));
    }
    let n = model.n as i32;
    let r = quad::integrate_from_zero(
        |s| model.density_unchecked(s) * s.powi(n + 1),
        eps,
        QuadOptions::rel(1e-10),
    )?;
    Ok(unit_sphere_area(model.n) * r.value / model.n as f64)
}

/// Log-log table of the tail mass Λ(r) on `[r_min, r_max]`, the backbone of
/// jump-radius sampling and killing-density evaluation.
pub struct TailTable {
    log_r0: f64,
    h: f64,
    log_tail: Vec<f64>,
    /// Bucketed search hints over ln Λ: bucket b starts at knot `hint[b]`.
    hint: Vec<u32>,
    bucket_width: f64,
}

impl fmt::Debug for TailTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailTable")
            .field("r_min", &self.log_r0.exp())
            .field("knots", &self.log_tail.len())
            .finish()
    }
}

impl TailTable {
    fn empty() -> Self {
        Self { log_r0: 0.0, h: 1.0, log_tail: Vec::new(), hint: Vec::new(), bucket_width: 1.0 }
    }

    pub fn build(model: &LevyModel, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) {
            return config_err("tail table needs 0 < r_min < r_max");
        }
        let decades = (r_max / r_min).log10();
        let knots = ((decades * TAIL_KNOTS_PER_DECADE).ceil() as usize).max(2048);
        let log_r0 = r_min.ln();
        let h = (r_max / r_min).ln() / (knots - 1) as f64;
        let n = model.n as i32;
        let omega = unit_sphere_area(model.n);
        let last = tail_mass(model, (log_r0 + h * (knots - 1) as f64).exp())?;
        let mut tail = vec![0.0; knots];
        tail[knots - 1] = last;
        let mut f = |t: f64| {
            let s = t.exp();
            model.density_unchecked(s) * s.powi(n)
        };
        for k in (0..knots - 1).rev() {
            let a = log_r0 + h * k as f64;
            let (seg, _) = quad::gk15(&mut f, a, a + h);
            tail[k] = tail[k + 1] + omega * seg;
        }
        if tail.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return config_err("tail mass is not finite and positive on the table range");
        }
        let log_tail: Vec<f64> = tail.into_iter().map(f64::ln).collect();
        if log_tail.windows(2).any(|w| !(w[1] < w[0])) {
            return config_err("tail mass is not strictly decreasing on the table range");
        }
        let buckets = 2 * knots;
        let bucket_width = (log_tail[0] - log_tail[knots - 1]) / buckets as f64;
        let mut hint = Vec::with_capacity(buckets);
        let mut k = 0usize;
        for b in 0..buckets {
            // Largest k with lt[k] >= top of bucket b.
            let top = log_tail[0] - b as f64 * bucket_width;
            while k + 1 < knots - 1 && log_tail[k + 1] >= top {
                k += 1;
            }
            hint.push(k as u32);
        }
        Ok(Self { log_r0, h, log_tail, hint, bucket_width })
    }

    pub fn r_min(&self) -> f64 {
        self.log_r0.exp()
    }

    pub fn knots(&self) -> usize {
        self.log_tail.len()
    }

    /// ln Λ(r), linearly interpolated in (ln r, ln Λ); `None` below the table.
    /// Above the table the last segment's power law is extended.
    #[inline]
    pub fn log_tail(&self, r: f64) -> Option<f64> {
        let x = (r.ln() - self.log_r0) / self.h;
        if !(x >= -1e-9) {
            return None;
        }
        let last = self.log_tail.len() - 1;
        let (k, frac) = if x >= last as f64 {
            (last - 1, x - (last - 1) as f64)
        } else {
            let k = (x.max(0.0) as usize).min(last - 1);
            (k, x.max(0.0) - k as f64)
        };
        Some(self.log_tail[k] + frac * (self.log_tail[k + 1] - self.log_tail[k]))
    }

    /// Inverse of [`Self::log_tail`]: the radius with ln Λ(r) = `target`.
    #[inline]
    pub fn radius_for_log_tail(&self, target: f64) -> f64 {
        let lt = &self.log_tail;
        let last = lt.len() - 1;
        if target >= lt[0] {
            return self.log_r0.exp();
        }
        let k = if target <= lt[last] {
            last - 1
        } else {
            // lt is strictly decreasing: find k with lt[k] >= target > lt[k+1],
            // starting from the bucket hint and scanning forward.
            let b = (((lt[0] - target) / self.bucket_width) as usize).min(self.hint.len() - 1);
            let mut k = self.hint[b] as usize;
            while lt[k + 1] >= target {
                k += 1;
            }
            k
        };
        let frac = (target - lt[k]) / (lt[k + 1] - lt[k]);
        (self.log_r0 + self.h * (k as f64 + frac)).exp()
    }
}

/// Killing density with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KillingValue {
    pub value: f64,
    pub error: f64,
}

/// κ_D(x) = ∫_{D^c} j(|y−x|) dy for x strictly inside D.
pub fn killing_density(model: &LevyModel, domain: &Domain, x: &[f64]) -> Result<KillingValue> {
    killing_density_truncated(model, domain, x, 0.0)
}

/// The killing density of the ε-truncated process: only jumps longer than
/// `eps` count. `eps = 0` gives κ_D itself.
pub fn killing_density_truncated(
    model: &LevyModel,
    domain: &Domain,
    x: &[f64],
    eps: f64,
) -> Result<KillingValue> {
    if domain.dim() != model.dim() || x.len() != model.dim() {
        return domain_err("dimension mismatch between model, domain and point");
    }
    let delta = domain.dist_to_boundary(x);
    if !(delta > 0.0) {
        return domain_err("killing density diverges on or outside the boundary");
    }
    let lam = |s: f64| model.tail_fast(s.max(eps));
    // Average over directions of Σ_intervals Λ(s0) − Λ(s1).
    let along = |u: &[f64]| -> f64 {
        domain
            .ray_exterior(x, u)
            .iter()
            .map(|&(s0, s1)| lam(s0) - lam(s1))
            .sum::<f64>()
    };
    let n = model.dim();
    if n == 1 {
        let v = 0.5 * (along(&[1.0]) + along(&[-1.0]));
        return Ok(KillingValue { value: v, error: 0.0 });
    }
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-7, max_intervals: 4000 };
    match domain.shape() {
        Shape::Ball { center, .. } | Shape::Annulus { center, .. } => {
            // Rotational symmetry about the axis through the center and x.
            let (e1, e2) = axis_frame(x, center);
            let mut u = vec![0.0; n];
            let w = sphere_angle_weight(n);
            let mut g = |theta: f64| {
                let (s, c) = theta.sin_cos();
                for i in 0..n {
                    u[i] = c * e1[i] + s * e2[i];
                }
                along(&u) * s.powi(n as i32 - 2)
            };
            let r = quad::integrate(&mut g, 0.0, PI, opts)?;
            Ok(KillingValue { value: r.value / w, error: r.error / w })
        }
        Shape::Box { lo, hi } if n == 2 => {
            // Split at the corner directions where the exit face changes.
            let mut cuts: Vec<f64> = Vec::new();
            for cx in [lo[0], hi[0]] {
                for cy in [lo[1], hi[1]] {
                    let a = (cy - x[1]).atan2(cx - x[0]);
                    cuts.push(if a < 0.0 { a + 2.0 * PI } else { a });
                }
            }
            cuts.push(0.0);
            cuts.push(2.0 * PI);
            cuts.sort_by(f64::total_cmp);
            let mut total = 0.0;
            let mut err = 0.0;
            for pair in cuts.windows(2) {
                let r = quad::integrate(
                    |t: f64| {
                        let (s, c) = t.sin_cos();
                        along(&[c, s])
                    },
                    pair[0],
                    pair[1],
                    opts,
                )?;
                total += r.value;
                err += r.error;
            }
            Ok(KillingValue { value: total / (2.0 * PI), error: err / (2.0 * PI) })
        }
        _ => {
            // Quasi-Monte-Carlo over the sphere (Halton points mapped through
            // the Gaussian quantile) for boxes and intervals in n ≥ 3.
            let m = 1 << 15;
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            let mut u = vec![0.0; n];
            for i in 1..=m {
                let mut norm = 0.0;
                for (d, ui) in u.iter_mut().enumerate() {
                    let q = halton(i, PRIMES[d % PRIMES.len()]);
                    *ui = crate::stats::normal_quantile(q);
                    norm += *ui * *ui;
                }
                let norm = norm.sqrt();
                u.iter_mut().for_each(|v| *v /= norm);
                let v = along(&u);
                acc += v;
                acc2 += v * v;
            }
            let mean = acc / m as f64;
            let sd = (acc2 / m as f64 - mean * mean).max(0.0).sqrt();
            Ok(KillingValue { value: mean, error: sd / (m as f64).sqrt() })
        }
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// ∫_0^π sin^{n-2}θ dθ, the normaliser of the axial angle density on S^{n-1}.
fn sphere_angle_weight(n: usize) -> f64 {
    let m = n as f64;
    (PI.ln() / 2.0 + ln_gamma((m - 1.0) / 2.0) - ln_gamma(m / 2.0)).exp()
}

/// Orthonormal pair: e1 along x − center (or the first axis), e2 orthogonal.
fn axis_frame(x: &[f64], center: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut e1: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let norm = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        e1.iter_mut().for_each(|v| *v /= norm);
    } else {
        e1 = vec![0.0; n];
        e1[0] = 1.0;
    }
    // Gram–Schmidt on the coordinate axis least aligned with e1.
    let k = (0..n)
        .min_by(|&a, &b| e1[a].abs().total_cmp(&e1[b].abs()))
        .unwrap_or(0);
    let mut e2 = vec![0.0; n];
    e2[k] = 1.0;
    let dot = e1[k];
    for i in 0..n {
        e2[i] -= dot * e1[i];
    }
    let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
    e2.iter_mut().for_each(|v| *v /= n2);
    (e1, e2)
}

/// Evaluates a killing rate at a point; implemented by precomputed tables and
/// by direct quadrature.
pub trait KillingRate: Send + Sync {
    fn rate(&self, x: &[f64]) -> f64;
}

/// Tabulated κ^ε_D for domains whose killing density depends on one radial
/// coordinate (balls, annuli, intervals). Interpolates ln κ linearly in ln δ.
#[derive(Debug, Clone)]
pub struct KillingTable {
    domain: Domain,
    sides: Vec<SideTable>,
}

#[derive(Debug, Clone)]
struct SideTable {
    log_delta: Vec<f64>,
    log_kappa: Vec<f64>,
}

impl SideTable {
    fn eval(&self, delta: f64) -> f64 {
        let ld = delta.ln();
        let xs = &self.log_delta;
        let ys = &self.log_kappa;
        let last = xs.len() - 1;
        if ld <= xs[0] {
            return ys[0].exp();
        }
        if ld >= xs[last] {
            return ys[last].exp();
        }
        let k = match xs.binary_search_by(|v| v.total_cmp(&ld)) {
            Ok(k) => k.min(last - 1),
            Err(k) => k - 1,
        };
        let t = (ld - xs[k]) / (xs[k + 1] - xs[k]);
        (ys[k] + t * (ys[k + 1] - ys[k])).exp()
    }
}

impl KillingTable {
    /// Builds the table of κ^ε for `eps ≥ 0`. Fails for boxes in n ≥ 2.
    pub fn build(model: &LevyModel, domain: &Domain, eps: f64) -> Result<Self> {
        let n = model.dim();
        let (centre, sides): (Vec<f64>, Vec<(Vec<f64>, f64)>) = match domain.shape() {
            Shape::Ball { center, radius } => {
                let mut dir = vec![0.0; n];
                dir[0] = 1.0;
                (center.clone(), vec![(dir, *radius)])
            }
            Shape::Interval { a, b } => {
                (vec![0.5 * (a + b)], vec![(vec![1.0], 0.5 * (b - a))])
            }
            Shape::Annulus { center, r_in, r_out } => {
                let mut dir = vec![0.0; n];
                dir[0] = 1.0;
                // Side 0 measures depth from the outer sphere, side 1 from the inner.
                (center.clone(), vec![(dir.clone(), *r_out), (dir, -*r_in)])
            }
            Shape::Box { .. } => {
                return config_err("killing tables need a radially symmetric domain");
            }
        };
        let depth_max = match domain.shape() {
            Shape::Annulus { r_in, r_out, .. } => 0.5 * (r_out - r_in),
            _ => domain.inradius(),
        };
        let delta_min = 1e-9 * depth_max;
        let knots = 900;
        let linear_knots = 400;
        let mut out = Vec::new();
        for (dir, boundary_radius) in sides {
            // Log spacing resolves the blow-up at the boundary, linear spacing
            // the smooth interior.
            let mut grid: Vec<f64> = (0..knots)
                .map(|k| {
                    let t = k as f64 / (knots - 1) as f64;
                    (delta_min.ln() + t * (depth_max / delta_min).ln()).exp()
                })
                .chain((1..=linear_knots).map(|k| depth_max * k as f64 / linear_knots as f64))
                .collect();
            if eps > delta_min && eps < depth_max {
                // Extra resolution around the truncation kink at δ = ε.
                grid.extend((0..=200).map(|k| eps * 4f64.powf(k as f64 / 100.0 - 1.0)));
                grid.retain(|&d| d <= depth_max);
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * *b);
            let mut log_delta = Vec::with_capacity(grid.len());
            let mut log_kappa = Vec::with_capacity(grid.len());
            for &delta in &grid {
                // Point at distance delta inside the boundary on this side.
                let radial = if boundary_radius > 0.0 {
                    boundary_radius - delta
                } else {
                    -boundary_radius + delta
                };
                let x: Vec<f64> = centre.iter().zip(&dir).map(|(c, d)| c + radial * d).collect();
                let k = killing_density_truncated(model, domain, &x, eps)?;
                log_delta.push(delta.ln());
                log_kappa.push(k.value.ln());
            }
            out.push(SideTable { log_delta, log_kappa });
        }
        Ok(Self { domain: domain.clone(), sides: out })
    }
}

impl KillingRate for KillingTable {
    #[inline]
    fn rate(&self, x: &[f64]) -> f64 {
        let delta = self.domain.dist_to_boundary(x);
        let side = match self.domain.shape() {
            Shape::Annulus { center, r_in, r_out } => {
                let rho = dist(x, center);
                usize::from(rho - r_in < r_out - rho)
            }
            _ => 0,
        };
        self.sides[side].eval(delta)
    }
}

/// Direct quadrature at every call; for domains without a radial table.
pub struct DirectKilling {
    pub model: LevyModel,
    pub domain: Domain,
    pub eps: f64,
}

impl KillingRate for DirectKilling {
    fn rate(&self, x: &[f64]) -> f64 {
        killing_density_truncated(&self.model, &self.domain, x, self.eps)
            .map(|k| k.value)
            .unwrap_or(f64::INFINITY)
    }
}

/// Builds the fastest available killing-rate evaluator for the domain.
pub fn killing_rate(model: &LevyModel, domain: &Domain, eps: f64) -> Result<Box<dyn KillingRate>> {
    match domain.shape() {
        Shape::Box { .. } => Ok(Box::new(DirectKilling {
            model: model.clone(),
            domain: domain.clone(),
            eps,
        })),
        _ => Ok(Box::new(KillingTable::build(model, domain, eps)?)),
    }
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Log-spaced test grid for the scaling-exponent fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingGrid {
    /// t-range for (H1), must cover [1, 10⁶].
    pub large_t: (f64, f64),
    /// t-range for (H2), must cover [10⁻⁶, 1).
    pub small_t: (f64, f64),
    pub lambda_max: f64,
    pub points_per_decade: usize,
    /// Exponents are fitted on λ ≥ this value; constants use the whole grid.
    pub fit_lambda_min: f64,
}

impl Default for ScalingGrid {
    fn default() -> Self {
        Self {
            large_t: (1.0, 1e6),
            small_t: (1e-6, 1.0),
            lambda_max: 1e6,
            points_per_decade: 8,
            fit_lambda_min: 10.0,
        }
    }
}

/// Fitted scaling exponents and constants of (H1) (t ≥ 1) and (H2) (t < 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub valid: bool,
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let m = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=m)
        .map(|k| lo * 10f64.powf(decades * k as f64 / m as f64))
        .collect()
}

/// Fits (δ, a) pairs with a_lo·λ^{2δ_lo} ≤ ψ(λt)/ψ(t) ≤ a_hi·λ^{2δ_hi} on the
/// grid, where ψ(s) = φ(s²) is the radial characteristic-exponent surrogate.
/// Exponents come from the extreme log-slopes at λ ≥ `fit_lambda_min`; the
/// constants absorb the rest of the grid. Exact for pure powers.
pub fn estimate_scaling_exponents(
    profile: &BernsteinProfile,
    grid: &ScalingGrid,
) -> Result<ScalingEstimate> {
    if grid.large_t.0 > 1.0 || grid.large_t.1 < 1e6 || grid.small_t.0 > 1e-6 || grid.small_t.1 < 1.0 {
        return domain_err("scaling grid must span [1, 1e6] and [1e-6, 1]");
    }
    if grid.lambda_max <= grid.fit_lambda_min || grid.fit_lambda_min < 1.0 {
        return domain_err("scaling grid needs 1 ≤ fit_lambda_min < lambda_max");
    }
    let psi = |s: f64| profile.eval(s * s).ln();
    let lambdas = log_grid(1.0, grid.lambda_max, grid.points_per_decade);
    let fit = |ts: &[f64]| -> (f64, f64, f64, f64) {
        let mut lo_slope = f64::INFINITY;
        let mut hi_slope = f64::NEG_INFINITY;
        for &t in ts {
            let base = psi(t);
            for &l in lambdas.iter().filter(|&&l| l >= grid.fit_lambda_min) {
                let slope = (psi(l * t) - base) / l.ln();
                lo_slope = lo_slope.min(slope);
                hi_slope = hi_slope.max(slope);
            }
        }
        let (d_lo, d_hi) = (0.5 * lo_slope, 0.5 * hi_slope);
        let mut a_lo = f64::INFINITY;
        let mut a_hi = f64::NEG_INFINITY;
        for &t in ts {
            let base = psi(t);
            for &l in &lambdas {
                let lr = psi(l * t) - base;
                a_lo = a_lo.min(lr - 2.0 * d_lo * l.ln());
                a_hi = a_hi.max(lr - 2.0 * d_hi * l.ln());
            }
        }
        (d_lo, d_hi, a_lo.exp(), a_hi.exp())
    };
    let large = log_grid(grid.large_t.0, grid.large_t.1, grid.points_per_decade);
    let small: Vec<f64> = log_grid(grid.small_t.0, grid.small_t.1, grid.points_per_decade)
        .into_iter()
        .filter(|&t| t < 1.0)
        .collect();
    let (delta1, delta2, a1, a2) = fit(&large);
    let (delta3, delta4, a3, a4) = fit(&small);
    let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi < 1.0;
    let valid = ok(delta1, delta2) && ok(delta3, delta4);
    Ok(ScalingEstimate { delta1, delta2, delta3, delta4, a1, a2, a3, a4, valid })
}
