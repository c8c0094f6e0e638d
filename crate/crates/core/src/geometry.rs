//! Domains with closed-form boundary distance and their κ-fat structure.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Error, Result};
use crate::kernels::{dist, parse_kv, unit_ball_volume, unit_sphere_area};

/// Supported shapes. `Interval` is the one-dimensional case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Annulus { center: Vec<f64>, r_in: f64, r_out: f64 },
    Interval { a: f64, b: f64 },
}

/// An open bounded domain together with κ-fat characteristics (R, κ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    shape: Shape,
    pub fat_r: f64,
    pub fat_kappa: f64,
}

/// Parameter intervals of a ray x + s·u, s > 0, that lie outside the domain.
/// Supported shapes produce at most two such intervals.
#[derive(Debug, Clone, Copy)]
pub struct RayExterior {
    len: usize,
    items: [(f64, f64); 2],
}

impl RayExterior {
    fn one(s: f64) -> Self {
        Self { len: 1, items: [(s, f64::INFINITY), (0.0, 0.0)] }
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.items[..self.len].iter()
    }
}

/// The corridor data r(x,y), ε₁, a witness point of 𝓑(x,y), and z0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corridor {
    pub r_xy: f64,
    pub eps1: f64,
    pub witness: Vec<f64>,
    pub z0: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn check_point(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        domain_err("coordinates must be finite")
    }
}

impl Domain {
    /// Ball of radius ρ: characteristics (2ρ, 1/2).
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return domain_err("ball center needs at least one coordinate");
        }
        check_point(&center)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return domain_err(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Self { shape: Shape::Ball { center, radius }, fat_r: 2.0 * radius, fat_kappa: 0.5 })
    }

    /// Axis-aligned box: characteristics (shortest side, 1/(1+√n)).
    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return domain_err("box corners must have equal, positive length");
        }
        check_point(&lo)?;
        check_point(&hi)?;
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return domain_err("box needs lo < hi in every coordinate");
        }
        let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
        let kappa = 1.0 / (1.0 + (lo.len() as f64).sqrt());
        Ok(Self { shape: Shape::Box { lo, hi }, fat_r: side, fat_kappa: kappa })
    }

    /// Spherical shell r_in < |x − c| < r_out: characteristics (r_out − r_in, 1/2).
    pub fn annulus(center: Vec<f64>, r_in: f64, r_out: f64) -> Result<Self> {
        if center.len() < 2 {
            return domain_err("annulus needs dimension at least 2");
        }
        check_point(&center)?;
        if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
            return domain_err("annulus needs 0 < r_in < r_out");
        }
        Ok(Self {
            shape: Shape::Annulus { center, r_in, r_out },
            fat_r: r_out - r_in,
            fat_kappa: 0.5,
        })
    }

    /// Interval (a, b) in one dimension: characteristics (b − a, 1/2).
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return domain_err("interval needs finite a < b");
        }
        Ok(Self { shape: Shape::Interval { a, b }, fat_r: b - a, fat_kappa: 0.5 })
    }

    /// Parses `ball:r=1`, `box:0,0,2,1`, `annulus:rin=0.5,rout=1`,
    /// `interval:-1,1`. Balls and annuli are centred at the origin of R^dim.
    pub fn parse(s: &str, dim: usize) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("domain `{s}` lacks `kind:` prefix")))?;
        let numbers = || -> Result<Vec<f64>> {
            rest.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("`{v}` is not a number"))))
                .collect()
        };
        let keyed = |keys: &[&str]| -> Result<Vec<f64>> {
            let kv = parse_kv(rest)?;
            if let Some((k, _)) = kv.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
                return Err(Error::Parse(format!("unknown key `{k}` in domain `{s}`")));
            }
            keys.iter()
                .map(|key| {
                    kv.iter()
                        .find(|(k, _)| k == key)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| Error::Parse(format!("domain `{s}` is missing `{key}`")))
                })
                .collect()
        };
        let d = match kind.trim() {
            "ball" => Self::ball(vec![0.0; dim], keyed(&["r"])?[0])?,
            "annulus" => {
                let v = keyed(&["rin", "rout"])?;
                Self::annulus(vec![0.0; dim], v[0], v[1])?
            }
            "box" => {
                let v = numbers()?;
                if v.len() % 2 != 0 {
                    return Err(Error::Parse(format!("box `{s}` needs 2n coordinates")));
                }
                let h = v.len() / 2;
                Self::cuboid(v[..h].to_vec(), v[h..].to_vec())?
            }
            "interval" => {
                let v = numbers()?;
                if v.len() != 2 {
                    return Err(Error::Parse(format!("interval `{s}` needs two endpoints")));
                }
                Self::interval(v[0], v[1])?
            }
            other => return Err(Error::Parse(format!("unknown domain kind `{other}`"))),
        };
        if d.dim() != dim {
            return domain_err(format!("domain `{s}` has dimension {} but {dim} was requested", d.dim()));
        }
        Ok(d)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ball { center, .. } | Shape::Annulus { center, .. } => center.len(),
            Shape::Box { lo, .. } => lo.len(),
            Shape::Interval { .. } => 1,
        }
    }

    /// Dimension of the (smooth or piecewise flat) boundary.
    pub fn boundary_dim(&self) -> f64 {
        self.dim() as f64 - 1.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.dist_to_boundary(x) > 0.0
    }

    /// δ_D(x): Euclidean distance to the complement, 0 outside.
    #[inline]
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => (radius - dist(x, center)).max(0.0),
            Shape::Box { lo, hi } => {
                let mut d = f64::INFINITY;
                for i in 0..lo.len() {
                    d = d.min(x[i] - lo[i]).min(hi[i] - x[i]);
                }
                d.max(0.0)
            }
            Shape::Annulus { center, r_in, r_out } => {
                let r = dist(x, center);
                (r - r_in).min(r_out - r).max(0.0)
            }
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]).max(0.0),
        }
    }

    /// Depth of the deepest point.
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Box { lo, hi } => {
                0.5 * lo.iter().zip(hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
            }
            Shape::Annulus { r_in, r_out, .. } => 0.5 * (r_out - r_in),
            Shape::Interval { a, b } => 0.5 * (b - a),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { lo, hi } => norm(&lo.iter().zip(hi).map(|(a, b)| b - a).collect::<Vec<_>>()),
            Shape::Annulus { r_out, .. } => 2.0 * r_out,
            Shape::Interval { a, b } => b - a,
        }
    }

    pub fn volume(&self) -> f64 {
        let n = self.dim();
        match &self.shape {
            Shape::Ball { radius, .. } => unit_ball_volume(n) * radius.powi(n as i32),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Shape::Annulus { r_in, r_out, .. } => {
                unit_ball_volume(n) * (r_out.powi(n as i32) - r_in.powi(n as i32))
            }
            Shape::Interval { a, b } => b - a,
        }
    }

    /// The deep reference point z0 (a deepest point of the domain).
    pub fn incenter(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, .. } => center.clone(),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            Shape::Annulus { center, r_in, r_out } => {
                let mut z = center.clone();
                z[0] += 0.5 * (r_in + r_out);
                z
            }
            Shape::Interval { a, b } => vec![0.5 * (a + b)],
        }
    }

    /// z0 with the check κR ≤ δ(z0) ≤ R.
    pub fn reference_point(&self) -> Result<Vec<f64>> {
        let z0 = self.incenter();
        let depth = self.dist_to_boundary(&z0);
        let lo = self.fat_kappa * self.fat_r;
        if depth < lo * (1.0 - 1e-12) || depth > self.fat_r {
            return config_err(format!(
                "deepest point has depth {depth}, outside [κR, R] = [{lo}, {}]",
                self.fat_r
            ));
        }
        Ok(z0)
    }

    /// A point of ∂D nearest to the interior point x.
    pub fn nearest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        let radial = |center: &[f64], target: f64| -> Vec<f64> {
            let v: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
            let r = norm(&v);
            let mut out = center.to_vec();
            if r > 0.0 {
                for i in 0..out.len() {
                    out[i] += target * v[i] / r;
                }
            } else {
                out[0] += target;
            }
            out
        };
        match &self.shape {
            Shape::Ball { center, radius } => radial(center, *radius),
            Shape::Annulus { center, r_in, r_out } => {
                let r = dist(x, center);
                radial(center, if r - r_in < r_out - r { *r_in } else { *r_out })
            }
            Shape::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0usize, 0.0);
                for i in 0..lo.len() {
                    if x[i] - lo[i] < best.0 {
                        best = (x[i] - lo[i], i, lo[i]);
                    }
                    if hi[i] - x[i] < best.0 {
                        best = (hi[i] - x[i], i, hi[i]);
                    }
                }
                let mut q = x.to_vec();
                q[best.1] = best.2;
                q
            }
            Shape::Interval { a, b } => vec![if x[0] - a < b - x[0] { *a } else { *b }],
        }
    }

    /// True when Q lies on ∂D up to a relative tolerance.
    pub fn on_boundary(&self, q: &[f64]) -> bool {
        let tol = 1e-9 * self.diameter();
        let gap = match &self.shape {
            Shape::Ball { center, radius } => (dist(q, center) - radius).abs(),
            Shape::Annulus { center, r_in, r_out } => {
                let r = dist(q, center);
                (r - r_in).abs().min((r - r_out).abs())
            }
            Shape::Box { lo, hi } => {
                let inside = (0..lo.len()).all(|i| q[i] >= lo[i] - tol && q[i] <= hi[i] + tol);
                if !inside {
                    return false;
                }
                (0..lo.len())
                    .map(|i| (q[i] - lo[i]).abs().min((hi[i] - q[i]).abs()))
                    .fold(f64::INFINITY, f64::min)
            }
            Shape::Interval { a, b } => (q[0] - a).abs().min((q[0] - b).abs()),
        };
        gap <= tol
    }

    /// A_r(Q): centre of a ball of radius κr inside D ∩ B(Q, r).
    pub fn fat_point(&self, q: &[f64], r: f64) -> Result<Vec<f64>> {
        if q.len() != self.dim() {
            return domain_err("boundary point has the wrong dimension");
        }
        if !(r > 0.0 && r < self.fat_r) {
            return domain_err(format!("fat_point scale must lie in (0, {}), got {r}", self.fat_r));
        }
        if !self.on_boundary(q) {
            return domain_err("fat_point needs a boundary point");
        }
        let inward = |center: &[f64], sign: f64| -> Vec<f64> {
            let v: Vec<f64> = q.iter().zip(center).map(|(a, b)| a - b).collect();
            let len = norm(&v);
            q.iter().zip(&v).map(|(a, d)| a - sign * 0.5 * r * d / len).collect()
        };
        Ok(match &self.shape {
            Shape::Ball { center, .. } => inward(center, 1.0),
            Shape::Annulus { center, r_in, r_out } => {
                let rq = dist(q, center);
                if (rq - r_in).abs() < (rq - r_out).abs() {
                    inward(center, -1.0)
                } else {
                    inward(center, 1.0)
                }
            }
            Shape::Box { lo, hi } => {
                let m = self.fat_kappa * r;
                q.iter()
                    .enumerate()
                    .map(|(i, v)| v.clamp(lo[i] + m, hi[i] - m))
                    .collect()
            }
            Shape::Interval { a, b } => {
                if (q[0] - a).abs() < (q[0] - b).abs() {
                    vec![a + 0.5 * r]
                } else {
                    vec![b - 0.5 * r]
                }
            }
        })
    }

    /// r(x,y), ε₁ = κR/24 and a witness of 𝓑(x,y) built from the boundary
    /// projection of x; the witness is z0 once r(x,y) ≥ ε₁.
    pub fn corridor(&self, x: &[f64], y: &[f64]) -> Result<Corridor> {
        let (dx, dy) = (self.dist_to_boundary(x), self.dist_to_boundary(y));
        if dx <= 0.0 || dy <= 0.0 {
            return domain_err("corridor needs interior points");
        }
        let z0 = self.reference_point()?;
        let r_xy = dx.max(dy).max(dist(x, y));
        let eps1 = self.fat_kappa * self.fat_r / 24.0;
        let witness = if r_xy < eps1 {
            let q = self.nearest_boundary_point(x);
            self.fat_point(&q, r_xy)?
        } else {
            z0.clone()
        };
        Ok(Corridor { r_xy, eps1, witness, z0 })
    }

    /// True when the closure of `inner` lies inside this (open) domain.
    /// Supports balls and intervals as `inner`, and boxes inside convex shapes.
    pub fn encloses(&self, inner: &Domain) -> bool {
        if inner.dim() != self.dim() {
            return false;
        }
        match &inner.shape {
            Shape::Ball { center, radius } => self.dist_to_boundary(center) > *radius,
            Shape::Annulus { center, r_out, .. } => self.dist_to_boundary(center) > *r_out,
            Shape::Interval { a, b } => self.contains(&[*a]) && self.contains(&[*b]),
            Shape::Box { lo, hi } => {
                if matches!(self.shape, Shape::Annulus { .. }) {
                    return false;
                }
                let n = lo.len();
                (0..1usize << n).all(|mask| {
                    let corner: Vec<f64> =
                        (0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect();
                    self.contains(&corner)
                })
            }
        }
    }

    /// Exterior parameter intervals along x + s·u for interior x and unit u.
    #[inline]
    pub fn ray_exterior(&self, x: &[f64], u: &[f64]) -> RayExterior {
        let sphere_exit = |center: &[f64], radius: f64| -> f64 {
            let mut b = 0.0;
            let mut c = 0.0;
            for i in 0..x.len() {
                let d = x[i] - center[i];
                b += u[i] * d;
                c += d * d;
            }
            c -= radius * radius;
            // c < 0: root -b + sqrt(b² - c) is positive; written to avoid cancellation.
            let disc = (b * b - c).max(0.0).sqrt();
            if b > 0.0 {
                -c / (b + disc)
            } else {
                disc - b
            }
        };
        match &self.shape {
            Shape::Ball { center, radius } => RayExterior::one(sphere_exit(center, *radius)),
            Shape::Box { lo, hi } => {
                let mut s = f64::INFINITY;
                for i in 0..lo.len() {
                    if u[i] > 0.0 {
                        s = s.min((hi[i] - x[i]) / u[i]);
                    } else if u[i] < 0.0 {
                        s = s.min((lo[i] - x[i]) / u[i]);
                    }
                }
                RayExterior::one(s)
            }
            Shape::Interval { a, b } => {
                RayExterior::one(if u[0] > 0.0 { (b - x[0]) / u[0] } else { (a - x[0]) / u[0] })
            }
            Shape::Annulus { center, r_in, r_out } => {
                let out = sphere_exit(center, *r_out);
                let mut b = 0.0;
                let mut c = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - center[i];
                    b += u[i] * d;
                    c += d * d;
                }
                c -= r_in * r_in;
                let disc = b * b - c;
                if b < 0.0 && disc > 0.0 {
                    let root = disc.sqrt();
                    // Enter the hole at c/(-b+root), leave it at -b+root.
                    let s0 = c / (-b + root);
                    let s1 = -b + root;
                    RayExterior { len: 2, items: [(s0, s1), (out, f64::INFINITY)] }
                } else {
                    RayExterior::one(out)
                }
            }
        }
    }

    /// First time s > 0 at which x + s·u leaves the domain.
    pub fn ray_exit(&self, x: &[f64], u: &[f64]) -> f64 {
        self.ray_exterior(x, u).iter().next().map_or(f64::INFINITY, |iv| iv.0)
    }

    /// Uniform interior point.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_interior_margin(0.0, rng)
            .expect("zero margin always leaves a feasible region")
    }

    /// Uniform point of {x ∈ D : δ_D(x) ≥ margin}.
    pub fn sample_interior_margin<R: Rng + ?Sized>(&self, margin: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(margin >= 0.0) || margin >= self.inradius() {
            return config_err(format!("margin {margin} leaves no feasible interior"));
        }
        let n = self.dim();
        let radial = |rng: &mut R, center: &[f64], a: f64, b: f64| -> Vec<f64> {
            let u: f64 = rng.random();
            let ni = n as i32;
            let r = (a.powi(ni) + u * (b.powi(ni) - a.powi(ni))).powf(1.0 / n as f64);
            let d = random_direction(n, rng);
            center.iter().zip(&d).map(|(c, v)| c + r * v).collect()
        };
        Ok(loop {
            let x = match &self.shape {
                Shape::Ball { center, radius } => radial(rng, center, 0.0, radius - margin),
                Shape::Annulus { center, r_in, r_out } => radial(rng, center, r_in + margin, r_out - margin),
                Shape::Box { lo, hi } => lo
                    .iter()
                    .zip(hi)
                    .map(|(a, b)| rng.random_range((a + margin)..=(b - margin)))
                    .collect(),
                Shape::Interval { a, b } => vec![rng.random_range((a + margin)..=(b - margin))],
            };
            // Guard against the closed upper end landing on ∂D when margin = 0.
            if self.dist_to_boundary(&x) > 0.0 {
                break x;
            }
        })
    }

    /// Point of ∂D, uniform with respect to surface measure.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let sphere = |rng: &mut R, center: &[f64], r: f64| -> Vec<f64> {
            let d = random_direction(n, rng);
            center.iter().zip(&d).map(|(c, v)| c + r * v).collect()
        };
        match &self.shape {
            Shape::Ball { center, radius } => sphere(rng, center, *radius),
            Shape::Annulus { center, r_in, r_out } => {
                let w_in = r_in.powi(n as i32 - 1);
                let w_out = r_out.powi(n as i32 - 1);
                let r = if rng.random::<f64>() * (w_in + w_out) < w_in { *r_in } else { *r_out };
                sphere(rng, center, r)
            }
            Shape::Box { lo, hi } => {
                let sides: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let total: f64 = sides.iter().product();
                let areas: Vec<f64> = sides.iter().map(|s| total / s).collect();
                let sum: f64 = areas.iter().sum::<f64>() * 2.0;
                let mut pick = rng.random::<f64>() * sum;
                let mut face = 0;
                let mut upper = false;
                'outer: for (i, &area) in areas.iter().enumerate() {
                    for up in [false, true] {
                        if pick < area {
                            face = i;
                            upper = up;
                            break 'outer;
                        }
                        pick -= area;
                        face = i;
                        upper = up;
                    }
                }
                (0..n)
                    .map(|i| {
                        if i == face {
                            if upper { hi[i] } else { lo[i] }
                        } else {
                            rng.random_range(lo[i]..hi[i])
                        }
                    })
                    .collect()
            }
            Shape::Interval { a, b } => vec![if rng.random::<bool>() { *a } else { *b }],
        }
    }

    /// `count` triples of independent uniform points with depth ≥ margin.
    pub fn sample_triples<R: Rng + ?Sized>(
        &self,
        count: usize,
        margin: f64,
        rng: &mut R,
    ) -> Result<Vec<[Vec<f64>; 3]>> {
        (0..count)
            .map(|_| {
                Ok([
                    self.sample_interior_margin(margin, rng)?,
                    self.sample_interior_margin(margin, rng)?,
                    self.sample_interior_margin(margin, rng)?,
                ])
            })
            .collect()
    }

    /// Surface area of ∂D.
    pub fn boundary_area(&self) -> f64 {
        let n = self.dim();
        match &self.shape {
            Shape::Ball { radius, .. } => unit_sphere_area(n) * radius.powi(n as i32 - 1),
            Shape::Annulus { r_in, r_out, .. } => {
                unit_sphere_area(n) * (r_in.powi(n as i32 - 1) + r_out.powi(n as i32 - 1))
            }
            Shape::Box { lo, hi } => {
                let sides: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let total: f64 = sides.iter().product();
                2.0 * sides.iter().map(|s| total / s).sum::<f64>()
            }
            Shape::Interval { .. } => 2.0,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.shape {
            Shape::Ball { center, radius } => write!(f, "ball:r={radius} @ ({})", join(center)),
            Shape::Box { lo, hi } => write!(f, "box:{},{}", join(lo), join(hi)),
            Shape::Annulus { center, r_in, r_out } => {
                write!(f, "annulus:rin={r_in},rout={r_out} @ ({})", join(center))
            }
            Shape::Interval { a, b } => write!(f, "interval:{a},{b}"),
        }
    }
}

/// Uniform direction on S^{n-1}.
pub fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    match n {
        1 => vec![if rng.random::<bool>() { 1.0 } else { -1.0 }],
        2 => {
            let t = rng.random::<f64>() * std::f64::consts::TAU;
            vec![t.cos(), t.sin()]
        }
        _ => loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm(&v);
            if len > 1e-300 {
                break v.into_iter().map(|a| a / len).collect();
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_disc() -> Domain {
        Domain::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = unit_disc();
        assert_eq!(d.dist_to_boundary(&[0.0, 0.0]), 1.0);
        assert_relative_eq!(d.dist_to_boundary(&[0.75, 0.0]), 0.25);
        assert_eq!(d.dist_to_boundary(&[2.0, 0.0]), 0.0);
        let b = Domain::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_relative_eq!(b.dist_to_boundary(&[1.0, 0.25]), 0.25);
        let a = Domain::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap();
        assert_relative_eq!(a.dist_to_boundary(&[0.6, 0.0]), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn fat_point_examples() {
        let d = unit_disc();
        let a = d.fat_point(&[1.0, 0.0], 0.5).unwrap();
        assert_relative_eq!(a[0], 0.75);
        assert_relative_eq!(a[1], 0.0);
        let a = d.fat_point(&[0.0, 1.0], 0.2).unwrap();
        assert_relative_eq!(a[1], 0.9);
        assert!(d.fat_point(&[1.0, 0.0], 2.0).is_err());
        assert!(d.fat_point(&[1.0, 0.0], 0.0).is_err());
        assert!(d.fat_point(&[0.5, 0.0], 0.1).is_err());
    }

    #[test]
    fn characteristics() {
        let d = Domain::ball(vec![0.0; 3], 0.7).unwrap();
        assert_eq!((d.fat_r, d.fat_kappa), (1.4, 0.5));
        assert!(d.reference_point().is_ok());
        let b = Domain::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(b.fat_r, 1.0);
        assert!(b.reference_point().is_ok());
    }

    #[test]
    fn corridor_examples() {
        let d = unit_disc();
        let c = d.corridor(&[0.5, 0.0], &[-0.5, 0.0]).unwrap();
        assert_eq!(c.r_xy, 1.0);
        assert_relative_eq!(c.eps1, 1.0 / 24.0);
        assert_eq!(c.witness, c.z0);
        let x = [0.99, 0.0];
        let c = d.corridor(&x, &x).unwrap();
        assert_relative_eq!(c.r_xy, 0.01, epsilon = 1e-14);
        assert!(d.dist_to_boundary(&c.witness) > 0.25 * c.r_xy);
        assert!(dist(&x, &c.witness) < 5.0 * c.r_xy);
        assert!(d.corridor(&[1.2, 0.0], &x).is_err());
    }

    #[test]
    fn ray_exterior_matches_marching() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shapes = [
            unit_disc(),
            Domain::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(),
            Domain::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap(),
        ];
        for d in &shapes {
            for _ in 0..200 {
                let x = d.sample_interior(&mut rng);
                let u = random_direction(2, &mut rng);
                let ext = d.ray_exterior(&x, &u);
                for k in 1..400 {
                    let s = k as f64 * 0.01;
                    let p = [x[0] + s * u[0], x[1] + s * u[1]];
                    let outside = ext.iter().any(|&(a, b)| s > a + 1e-9 && s < b - 1e-9);
                    let inside = ext.iter().all(|&(a, b)| s < a - 1e-9 || s > b + 1e-9);
                    if outside {
                        assert!(!d.contains(&p));
                    }
                    if inside {
                        assert!(d.contains(&p));
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = unit_disc();
        let n = 100_000;
        let mut mean = [0.0, 0.0];
        for _ in 0..n {
            let x = d.sample_interior(&mut rng);
            assert!(d.contains(&x));
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        // Per-coordinate variance of the uniform disc is 1/4.
        let sigma = (0.25 / n as f64).sqrt();
        assert!(mean[0].abs() < 3.0 * sigma && mean[1].abs() < 3.0 * sigma);
        let shapes = [
            unit_disc(),
            Domain::cuboid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(),
            Domain::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap(),
            Domain::interval(-1.0, 1.0).unwrap(),
        ];
        for s in &shapes {
            for _ in 0..1000 {
                let q = s.sample_boundary(&mut rng);
                assert!(s.dist_to_boundary(&q) <= 1e-12);
                assert!(s.on_boundary(&q));
            }
            for [x, y, z] in s.sample_triples(100, 0.0, &mut rng).unwrap() {
                assert!(s.contains(&x) && s.contains(&y) && s.contains(&z));
            }
        }
        assert!(d.sample_triples(1, 1.5, &mut rng).is_err());
    }

    #[test]
    fn parse_examples() {
        assert_eq!(Domain::parse("ball:r=1", 2).unwrap(), unit_disc());
        let b = Domain::parse("box:0,0,2,1", 2).unwrap();
        assert_eq!(b.shape(), &Shape::Box { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] });
        assert!(Domain::parse("annulus:rin=0.5,rout=1", 2).is_ok());
        assert!(Domain::parse("interval:-1,1", 1).is_ok());
        assert!(Domain::parse("interval:-1,1", 2).is_err());
        assert!(Domain::parse("ball:radius=1", 2).is_err());
        assert!(Domain::parse("torus:r=1", 2).is_err());
    }
}
