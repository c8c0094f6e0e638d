//! Monte Carlo summaries: estimates with standard errors, paired moments for
//! ratio estimators, Wilson intervals and deterministic parallel reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Counters attached to an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Paths excluded because the Feynman–Kac exponent overflowed.
    pub overflow: u64,
    /// Jumps suppressed by censoring, summed over paths.
    pub censored_jumps: u64,
    /// Paths that hit the event cap or the time horizon before finishing.
    pub capped: u64,
    /// Samples skipped for any other documented reason.
    pub skipped: u64,
}

impl Diagnostics {
    pub fn merge(mut self, o: Self) -> Self {
        self.overflow += o.overflow;
        self.censored_jumps += o.censored_jumps;
        self.capped += o.capped;
        self.skipped += o.skipped;
        self
    }
}

/// A Monte Carlo estimate: value, standard error and path count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, n_paths: 0, diagnostics: Diagnostics::default() }
    }

    /// Multiplies value and standard error by a constant.
    pub fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.stderr *= c.abs();
        self
    }

    /// Combined standard error of the difference of independent estimates.
    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// |a − b| ≤ k·σ_combined.
    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.combined_stderr(other)
    }

    /// True when the value is within `k` standard errors of zero.
    pub fn indistinguishable_from_zero(&self, k: f64) -> bool {
        self.value.abs() <= k * self.stderr
    }
}

/// Running first and second moments of one sample stream.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.sum / self.n as f64 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self, diagnostics: Diagnostics) -> Estimate {
        let se = if self.n == 0 { f64::INFINITY } else { (self.variance() / self.n as f64).sqrt() };
        Estimate { value: self.mean(), stderr: se, n_paths: self.n, diagnostics }
    }
}

/// Joint moments of a paired sample (a_i, b_i) for ratio estimators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairedMoments {
    pub a: Moments,
    pub b: Moments,
    pub sum_ab: f64,
}

impl PairedMoments {
    #[inline]
    pub fn push(&mut self, a: f64, b: f64) {
        self.a.push(a);
        self.b.push(b);
        self.sum_ab += a * b;
    }

    pub fn merge(self, o: Self) -> Self {
        Self { a: self.a.merge(o.a), b: self.b.merge(o.b), sum_ab: self.sum_ab + o.sum_ab }
    }

    pub fn covariance(&self) -> f64 {
        let n = self.a.n as f64;
        if n < 2.0 {
            return 0.0;
        }
        (self.sum_ab - self.a.sum * self.b.sum / n) / (n - 1.0)
    }

    /// mean(a)/mean(b) with a delta-method standard error.
    pub fn ratio(&self, diagnostics: Diagnostics) -> Estimate {
        let n = self.a.n as f64;
        let (ma, mb) = (self.a.mean(), self.b.mean());
        let r = ma / mb;
        let var = (self.a.variance() - 2.0 * r * self.covariance() + r * r * self.b.variance())
            / (mb * mb * n);
        Estimate { value: r, stderr: var.max(0.0).sqrt(), n_paths: self.a.n, diagnostics }
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds at k = 0 and k = n are exactly 0 and 1; avoid rounding there.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Empirical quantile (linear interpolation) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

/// Paths per work chunk; fixed so reductions do not depend on thread count.
pub const CHUNK: u64 = 256;

/// Folds `fold(acc, i)` over i in 0..n in fixed-size chunks evaluated in
/// parallel, then combines the chunk results left to right. The result is
/// independent of the number of worker threads.
pub fn par_fold<A, I, F, C>(n: u64, init: I, fold: F, combine: C) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(A, u64) -> A + Sync,
    C: Fn(A, A) -> A,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).fold(init(), &fold)
        })
        .collect();
    parts.into_iter().fold(init(), combine)
}

/// Order-preserving parallel map over 0..n.
pub fn par_map<T: Send, F: Fn(u64) -> T + Sync + Send>(n: u64, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}
