//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used for every analytic kernel quantity: tail masses, small-jump
//! variances, killing densities and the κ-weighted volume integrals in
//! `verify`. Semi-infinite integrals are mapped with `s = a·e^t`, which
//! turns the power-law tails of Lévy densities into exponential decay.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }
}

/// One Kronrod panel: returns (kronrod estimate, |kronrod - gauss|).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        resk += w * pair;
        if i % 2 == 1 {
            resg += WG[i / 2] * pair;
        }
    }
    (resk * half, ((resk - resg) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration of `f` over `[a, b]`, bisecting the panel
/// with the largest error estimate until the total error meets the tolerance.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if b < a {
        let r = integrate(f, b, a, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature { estimate: total, error: total_err });
        }
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            // Accept if we are within a loose factor; otherwise report.
            if total_err <= 1e3 * tol {
                break;
            }
            return Err(Error::Quadrature { estimate: total, error: total_err });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum to remove drift from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(s, e), p| (s + p.value, e + p.error));
    Ok(QuadResult { value, error, evaluations })
}

/// Integrates `f` over `[a, ∞)` for `a > 0` using `s = a·e^t`.
///
/// The `t` axis is covered by doubling blocks `[0,1], [1,2], [2,4], …` until
/// a block contributes less than the tolerance. A sequence of blocks that
/// fails to decay is reported as divergence.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    debug_assert!(a > 0.0);
    let mut g = |t: f64| {
        let s = a * t.exp();
        let v = f(s) * s;
        if v.is_finite() { v } else { 0.0 }
    };
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut prev_block = f64::INFINITY;
    let mut small_blocks = 0;
    while lo < 745.0 {
        let block_opts = QuadOptions { rel_tol: opts.rel_tol * 0.1, ..opts };
        let r = integrate(&mut g, lo, hi, block_opts)?;
        total += r.value;
        total_err += r.error;
        evaluations += r.evaluations;
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if r.value.abs() <= 0.1 * tol {
            small_blocks += 1;
            if small_blocks >= 2 {
                return Ok(QuadResult { value: total, error: total_err, evaluations });
            }
        } else {
            small_blocks = 0;
        }
        if lo >= 64.0 && r.value.abs() >= prev_block {
            return Err(Error::Config(format!(
                "integral over [{a}, ∞) does not converge (block [{lo}, {hi}] = {:e})",
                r.value
            )));
        }
        prev_block = r.value.abs();
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::Config(format!("integral over [{a}, ∞) does not converge")))
}

/// Integrates `f` over `(0, b]` for `b > 0` using `s = b·e^{-t}`, suited to
/// integrable power-law singularities at the origin.
pub fn integrate_from_zero<F: FnMut(f64) -> f64>(
    mut f: F,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    debug_assert!(b > 0.0);
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut small_blocks = 0;
    let mut g = |t: f64| {
        let s = b * (-t).exp();
        let v = f(s) * s;
        if v.is_finite() { v } else { 0.0 }
    };
    while lo < 745.0 {
        let block_opts = QuadOptions { rel_tol: opts.rel_tol * 0.1, ..opts };
        let r = integrate(&mut g, lo, hi, block_opts)?;
        total += r.value;
        total_err += r.error;
        evaluations += r.evaluations;
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if r.value.abs() <= 0.1 * tol {
            small_blocks += 1;
            if small_blocks >= 2 {
                return Ok(QuadResult { value: total, error: total_err, evaluations });
            }
        } else {
            small_blocks = 0;
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::Config(format!("integral over (0, {b}] does not converge")))
}
