//! Classical closed forms for the rotationally symmetric α-stable process on a
//! ball, evaluated with a self-contained adaptive Simpson rule that shares no
//! code with the estimators or with the Gauss–Kronrod routines.
//!
//! All formulas refer to the process with characteristic exponent |ξ|^α,
//! whose Lévy density is A(n,α)|x|^{-n-α}.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{domain_err, Error, Result};

/// A(n,α) = α 2^{α-1} Γ((n+α)/2) / (π^{n/2} Γ(1-α/2)).
pub fn stable_levy_constant(n: usize, alpha: f64) -> f64 {
    let m = n as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((m + alpha) / 2.0)
        / (PI.powf(m / 2.0) * gamma(1.0 - alpha / 2.0))
}

/// Green-function constant Γ(n/2) / (2^α π^{n/2} Γ(α/2)²).
pub fn green_constant(n: usize, alpha: f64) -> f64 {
    let m = n as f64;
    gamma(m / 2.0) / (2f64.powf(alpha) * PI.powf(m / 2.0) * gamma(alpha / 2.0).powi(2))
}

/// Poisson-kernel constant Γ(n/2) π^{-n/2-1} sin(πα/2).
pub fn poisson_constant(n: usize, alpha: f64) -> f64 {
    let m = n as f64;
    gamma(m / 2.0) * PI.powf(-m / 2.0 - 1.0) * (PI * alpha / 2.0).sin()
}

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        min_width: f64,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        // Intervals at the resolution limit are accepted as they stand.
        if diff.abs() <= 15.0 * tol || b - a <= min_width {
            return Ok(left + right + diff / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature { estimate: left + right, error: diff.abs() });
        }
        Ok(step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, min_width)?
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, min_width)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 60, 1e-14 * (b - a).abs())
}

/// ∫₀^z t^{α/2-1}(1+t)^{-n/2} dt, with power substitutions removing the
/// endpoint singularities.
pub fn green_profile_integral(n: usize, alpha: f64, z: f64) -> Result<f64> {
    let a = alpha / 2.0;
    let h = n as f64 / 2.0;
    let head = |zz: f64| -> Result<f64> {
        // t = w^{1/a}
        simpson(&|w: f64| (1.0 + w.powf(1.0 / a)).powf(-h) / a, 0.0, zz.powf(a), 1e-13)
    };
    if z <= 1.0 {
        return head(z);
    }
    // ∫₁^z via t = 1/v, v = w^{1/b}, b = (n-α)/2.
    let b = h - a;
    let tail = simpson(&|w: f64| (1.0 + w.powf(1.0 / b)).powf(-h) / b, z.powf(-b), 1.0, 1e-13)?;
    Ok(head(1.0)? + tail)
}

/// G_{B(c,R)}(x, y) for the standard α-stable process, α < n.
pub fn ball_green(n: usize, alpha: f64, center: &[f64], radius: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) || alpha >= n as f64 {
        return domain_err(format!("ball Green formula needs 0 < α < min(2, n), got α={alpha}, n={n}"));
    }
    let sq = |p: &[f64]| p.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum::<f64>();
    let (xx, yy) = (sq(x), sq(y));
    let r2 = radius * radius;
    if xx >= r2 || yy >= r2 {
        return Ok(0.0);
    }
    let dxy2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if dxy2 == 0.0 {
        return domain_err("Green function is infinite on the diagonal");
    }
    let z = (r2 - xx) * (r2 - yy) / (r2 * dxy2);
    let d = dxy2.sqrt();
    Ok(green_constant(n, alpha) * d.powf(alpha - n as f64) * green_profile_integral(n, alpha, z)?)
}

/// Poisson kernel density K_{B(c,R)}(x, z) for |z − c| > R.
pub fn ball_poisson_kernel(n: usize, alpha: f64, center: &[f64], radius: f64, x: &[f64], z: &[f64]) -> f64 {
    let sq = |p: &[f64]| p.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum::<f64>();
    let r2 = radius * radius;
    let (xx, zz) = (sq(x), sq(z));
    if xx >= r2 || zz <= r2 {
        return 0.0;
    }
    let dxz: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    poisson_constant(n, alpha) * ((r2 - xx) / (zz - r2)).powf(alpha / 2.0) * dxz.powi(-(n as i32))
}

/// Regularized incomplete beta I_x(p, q) for x ∈ [0, 1], by quadrature.
pub fn incomplete_beta(x: f64, p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || p <= 0.0 || q <= 0.0 {
        return domain_err("incomplete beta needs x ∈ [0,1] and positive shapes");
    }
    let raw = |x: f64| -> Result<f64> {
        let m = x.min(0.5);
        // t = w^{1/p} on [0, m]
        let mut s = simpson(&|w: f64| (1.0 - w.powf(1.0 / p)).powf(q - 1.0) / p, 0.0, m.powf(p), 1e-14)?;
        if x > 0.5 {
            // s = 1 - t = w^{1/q} on [1 - x, 1/2]
            s += simpson(
                &|w: f64| (1.0 - w.powf(1.0 / q)).powf(p - 1.0) / q,
                (1.0 - x).powf(q),
                0.5f64.powf(q),
                1e-14,
            )?;
        }
        Ok(s)
    };
    Ok(raw(x)? / raw(1.0)?)
}

/// P_0(|X_{τ_B}| > ρ) for B = B(0, R) and ρ ≥ R; dimension free.
pub fn exit_radius_tail_from_center(alpha: f64, radius: f64, rho: f64) -> Result<f64> {
    if rho <= radius {
        return Ok(1.0);
    }
    incomplete_beta((radius / rho).powi(2), alpha / 2.0, 1.0 - alpha / 2.0)
}

/// E_x[τ_{B(c,R)}] for the standard α-stable process.
pub fn ball_expected_exit_time(n: usize, alpha: f64, center: &[f64], radius: f64, x: &[f64]) -> f64 {
    let m = n as f64;
    let xx: f64 = x.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum();
    let c = gamma(m / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((m + alpha) / 2.0));
    c * (radius * radius - xx).max(0.0).powf(alpha / 2.0)
}
