use levycensor_core::oracle;
use levycensor_core::pathsim::{Dynamics, Occupation, PathStatus, SimConfig, Simulator};
use levycensor_core::potential::{
    default_rho, estimate_gauge, estimate_green_censored, estimate_green_pair, exit_distribution,
    expected_exit_time_y, g_function, harmonic_eval_x, harmonic_eval_y, oracle_radial_exit_masses, ExitMesh,
    GFunctionSpec, GreenSource, MonteCarloGreen, OracleGreen,
};
use levycensor_core::stats::{par_fold, Moments};
use levycensor_core::{Domain, LevyModel};

fn disc() -> Domain {
    Domain::ball(vec![0.0, 0.0], 1.0).unwrap()
}

fn cfg(seed: u64) -> SimConfig {
    SimConfig { eps_cut: 2e-3, seed, ..SimConfig::default() }
}

#[test]
fn green_pair_matches_classical_ball_green_function() {
    let model = LevyModel::calibrated_stable(2, 1.0).unwrap();
    let (x, y) = ([-0.3, 0.0], [0.3, 0.0]);
    let est = estimate_green_pair(&model, &disc(), &x, &y, 0.02, 40_000, &cfg(1)).unwrap();
    let exact = OracleGreen::new(&model, &disc()).unwrap().green(&x, &y).unwrap().value;
    let rel = (est.value - exact).abs() / exact;
    assert!(rel < 0.1, "estimate {} ± {}, exact {exact}", est.value, est.stderr);
}

#[test]
fn green_pair_is_symmetric() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let (x, y) = ([-0.2, 0.3], [0.4, -0.1]);
    let a = estimate_green_pair(&model, &disc(), &x, &y, 0.04, 20_000, &cfg(2)).unwrap();
    let b = estimate_green_pair(&model, &disc(), &y, &x, 0.04, 20_000, &cfg(3)).unwrap();
    assert!(a.agrees_with(&b, 3.0), "{a:?} vs {b:?}");
}

#[test]
fn green_rejects_oversized_averaging_ball() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let r = estimate_green_pair(&model, &disc(), &[0.0, 0.0], &[0.4, 0.0], 0.2, 10, &cfg(0));
    assert!(r.is_err());
}

#[test]
fn green_is_stable_under_rho_halving() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let (x, y) = ([-0.3, 0.0], [0.3, 0.1]);
    let a = estimate_green_pair(&model, &disc(), &x, &y, 0.08, 20_000, &cfg(4)).unwrap();
    let b = estimate_green_pair(&model, &disc(), &x, &y, 0.04, 20_000, &cfg(5)).unwrap();
    // Lipschitz allowance: |∇G| ≲ G·(n − α)/|x − y| times ρ.
    let allowance = a.value * 0.8 / 0.6 * 0.08;
    assert!((a.value - b.value).abs() <= 3.0 * a.combined_stderr(&b) + allowance);
}

#[test]
fn censored_green_dominates_killed_green_and_gauge_is_bounded() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let d = disc();
    let b = Domain::ball(vec![0.5, 0.0], 0.3).unwrap();
    let (x, y) = ([0.4, 0.05], [0.6, -0.05]);
    let rho = default_rho(&b, &x, &y);
    let g = estimate_gauge(&model, &d, &b, &x, &y, rho, 20_000, &cfg(6)).unwrap();
    assert!(!g.indeterminate);
    assert!(g.green_censored.value + 3.0 * g.green_censored.combined_stderr(&g.green_killed) >= g.green_killed.value);
    assert!(g.u.value >= 1.0 - 3.0 * g.u.stderr && g.u.value <= 2.0 + 3.0 * g.u.stderr, "{:?}", g.u);
    // The censored estimator alone reproduces the shared-path value.
    let c = estimate_green_censored(&model, &d, &b, &x, &y, rho, 20_000, &cfg(6)).unwrap();
    assert_eq!(c.value, g.green_censored.value);
}

#[test]
fn gauge_is_one_far_from_the_boundary() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let d = Domain::ball(vec![0.0, 0.0], 1e4).unwrap();
    let b = Domain::ball(vec![0.0, 0.0], 0.5).unwrap();
    let g = estimate_gauge(&model, &d, &b, &[-0.1, 0.0], &[0.2, 0.0], 0.03, 10_000, &cfg(7)).unwrap();
    assert!((g.u.value - 1.0).abs() <= 3.0 * g.u.stderr + 1e-12, "{:?}", g.u);
}

#[test]
fn gauge_grows_as_the_outer_domain_shrinks() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let b = Domain::ball(vec![0.0, 0.0], 0.3).unwrap();
    let (x, y) = ([-0.1, 0.0], [0.1, 0.05]);
    let small = Domain::ball(vec![0.0, 0.0], 0.35).unwrap();
    let large = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let us = estimate_gauge(&model, &small, &b, &x, &y, 0.02, 10_000, &cfg(8)).unwrap().u;
    let ul = estimate_gauge(&model, &large, &b, &x, &y, 0.02, 10_000, &cfg(8)).unwrap().u;
    assert!(us.value + 3.0 * us.combined_stderr(&ul) >= ul.value, "{us:?} {ul:?}");
}

#[test]
fn exit_histogram_matches_poisson_kernel_and_conserves_mass() {
    let model = LevyModel::calibrated_stable(2, 1.0).unwrap();
    let mesh = ExitMesh { center: vec![0.0, 0.0], radii: vec![1.0, 1.05, 1.2, 1.5, 2.0, 3.0, 5.0], angular_bins: 8 };
    let n = 100_000;
    let h = exit_distribution(&model, &disc(), &[0.0, 0.0], &mesh, n, &cfg(9)).unwrap();
    assert_eq!(h.capped_fraction, 0.0);
    let total: u64 = h.masses.iter().flatten().map(|e| (e.value * n as f64).round() as u64).sum();
    assert_eq!(total, n);
    let exact = oracle_radial_exit_masses(1.0, 1.0, &mesh.radii).unwrap();
    let tv: f64 = 0.5 * h.radial_masses().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv <= 0.03, "total variation {tv}");
    // Rotational symmetry from the centre.
    let angular: Vec<f64> =
        (0..8).map(|a| h.masses.iter().map(|row| row[a].value).sum::<f64>()).collect();
    let sigma = (0.125 * 0.875 / n as f64).sqrt();
    assert!(angular.iter().all(|p| (p - 0.125).abs() < 4.0 * sigma), "{angular:?}");
}

#[test]
fn oracle_exit_kernel_integrates_to_the_radial_law() {
    // Independent check of the two oracle routes: integrate the Poisson
    // kernel over an annulus against the incomplete-beta tail.
    let (alpha, r1, r2) = (1.2, 1.5, 2.5);
    let f = |r: f64| oracle::ball_poisson_kernel(2, alpha, &[0.0, 0.0], 1.0, &[0.0, 0.0], &[r, 0.0]) * std::f64::consts::TAU * r;
    let mass = oracle::simpson(&f, r1, r2, 1e-12).unwrap();
    let tails = oracle_radial_exit_masses(alpha, 1.0, &[r1, r2]).unwrap();
    assert!((mass - tails[0]).abs() < 1e-8, "{mass} vs {}", tails[0]);
}

#[test]
fn harmonic_extension_of_constants_and_linearity() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let x = [0.2, -0.1];
    let one = harmonic_eval_x(&model, &disc(), &|_: &[f64]| 1.0, &x, 2_000, &cfg(10)).unwrap();
    assert_eq!(one.value, 1.0);
    assert_eq!(one.stderr, 0.0);
    let h1 = |z: &[f64]| if z[0] > 0.0 { 1.0 } else { 0.0 };
    let h2 = |z: &[f64]| 1.0 / (z[0] * z[0] + z[1] * z[1]);
    let a = harmonic_eval_x(&model, &disc(), &h1, &x, 10_000, &cfg(11)).unwrap();
    let b = harmonic_eval_x(&model, &disc(), &h2, &x, 10_000, &cfg(11)).unwrap();
    let c = harmonic_eval_x(&model, &disc(), &|z: &[f64]| 2.0 * h1(z) + 3.0 * h2(z), &x, 10_000, &cfg(11)).unwrap();
    // Shared paths make linearity exact up to rounding.
    assert!((c.value - (2.0 * a.value + 3.0 * b.value)).abs() < 1e-9);
}

#[test]
fn censored_harmonic_extension_is_sandwiched() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let d = disc();
    let b = Domain::ball(vec![0.3, 0.0], 0.25).unwrap();
    let h = |z: &[f64]| if z[1] > 0.0 { 1.0 } else { 0.25 };
    let x = [0.35, 0.05];
    let w = harmonic_eval_x(&model, &b, &|z: &[f64]| if d.contains(z) { h(z) } else { 0.0 }, &x, 20_000, &cfg(12)).unwrap();
    let hy = harmonic_eval_y(&model, &d, &b, &h, &x, 20_000, &cfg(13)).unwrap();
    let s = w.combined_stderr(&hy);
    assert!(hy.value >= w.value - 3.0 * s, "{hy:?} < {w:?}");
    assert!(hy.value <= 2.0 * w.value + 3.0 * (hy.stderr + 2.0 * w.stderr), "{hy:?} > 2·{w:?}");
}

#[test]
fn g_function_cap_and_far_regime() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let b = disc();
    let spec = GFunctionSpec::new(&model, &b, 1.0).unwrap();
    let depth = b.dist_to_boundary(&spec.z0);
    let phi = levycensor_core::big_phi(model.profile(), depth).unwrap();
    assert!((spec.cap - phi / depth.powi(2)).abs() < 1e-12 * spec.cap);
    // Far from z0 the Green value is below the cap and passes through.
    let x = [0.0, 0.8];
    assert!(levycensor_core::kernels::dist(&x, &spec.z0) > depth / 2.0);
    let g = g_function(&model, &b, &spec, &x, 0.05, 5_000, &cfg(14)).unwrap();
    let raw = estimate_green_pair(&model, &b, &x, &spec.z0, 0.05, 5_000, &cfg(14)).unwrap();
    assert_eq!(g, raw);
    assert!(g.value < spec.cap);
    assert!(g_function(&model, &b, &spec, &spec.z0.clone(), 0.05, 10, &cfg(0)).is_err());
}

#[test]
fn censored_exit_time_is_monotone_and_matches_integrated_green() {
    let model = LevyModel::calibrated_stable(1, 1.2).unwrap();
    let d = Domain::interval(-1.0, 1.0).unwrap();
    let small = Domain::interval(-0.3, 0.3).unwrap();
    let big = Domain::interval(-0.5, 0.5).unwrap();
    let x = [0.05];
    let ts = expected_exit_time_y(&model, &d, &small, &x, 20_000, &cfg(15)).unwrap();
    let tb = expected_exit_time_y(&model, &d, &big, &x, 20_000, &cfg(16)).unwrap();
    assert!(!ts.warning && ts.capped_fraction <= 1e-3);
    assert!(ts.mean.value <= tb.mean.value + 3.0 * ts.mean.combined_stderr(&tb.mean));

    // Discretized identity: E τ = Σ over cells of the averaged Green value × cell length.
    let cells = 10;
    let w = 1.0 / cells as f64;
    let sim = Simulator::new(&model, &d, &cfg(17)).unwrap();
    let (occ, _) = par_fold(
        20_000,
        || (vec![Moments::default(); cells], ()),
        |(mut m, ()), i| {
            let mut obs: Vec<Occupation> =
                (0..cells).map(|k| Occupation::new(&[-0.5 + (k as f64 + 0.5) * w], w / 2.0)).collect();
            struct All<'a>(&'a mut [Occupation]);
            impl levycensor_core::pathsim::PathObserver for All<'_> {
                fn hold(&mut self, x: &[f64], t: f64, dt: f64, p: bool) {
                    self.0.iter_mut().for_each(|o| o.hold(x, t, dt, p));
                }
            }
            let rec = sim
                .run(Dynamics::Censored, Some(&big), &x, &mut sim.config().path_rng(i), &mut All(&mut obs))
                .unwrap();
            assert!(matches!(rec.status, PathStatus::ExitedByJump { .. }));
            m.iter_mut().zip(&obs).for_each(|(m, o)| m.push(o.total_time / w));
            (m, ())
        },
        |(a, ()), (b, ())| (a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(), ()),
    );
    let integral: f64 = occ.iter().map(|m| m.mean() * w).sum();
    assert!((integral - tb.mean.value).abs() <= 0.15 * tb.mean.value, "{integral} vs {:?}", tb.mean);
}

#[test]
fn killed_exit_time_matches_the_classical_mean() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let d = Domain::ball(vec![0.0, 0.0], 1e4).unwrap();
    let x = [0.3, 0.0];
    let t = expected_exit_time_y(&model, &d, &disc(), &x, 20_000, &cfg(18)).unwrap();
    let exact = oracle::ball_expected_exit_time(2, 1.2, &[0.0, 0.0], 1.0, &x);
    assert!((t.mean.value - exact).abs() <= 3.0 * t.mean.stderr + 0.02 * exact, "{:?} vs {exact}", t.mean);
}

#[test]
fn monte_carlo_green_source_tracks_the_oracle() {
    let model = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let mc = MonteCarloGreen { model: model.clone(), domain: disc(), cfg: cfg(19), n_paths: 20_000 };
    let or = OracleGreen::new(&model, &disc()).unwrap();
    let (x, y) = ([0.0, 0.0], [0.5, 0.0]);
    let a = mc.green(&x, &y).unwrap();
    let b = or.green(&x, &y).unwrap();
    assert!((a.value - b.value).abs() / b.value < 0.1, "{a:?} vs {b:?}");
    assert!(OracleGreen::new(&LevyModel::calibrated_stable(1, 1.2).unwrap(), &Domain::interval(-1.0, 1.0).unwrap()).is_err());
}

#[test]
fn green_pair_oracle_agreement_across_alpha() {
    // Heavier tails need more paths for the same relative error.
    for (alpha, n, seed) in [(0.8, 200_000, 21), (1.2, 50_000, 22), (1.5, 20_000, 23)] {
        let model = LevyModel::calibrated_stable(2, alpha).unwrap();
        let (x, y) = ([-0.3, 0.1], [0.3, 0.0]);
        let est = estimate_green_pair(&model, &disc(), &x, &y, 0.04, n, &cfg(seed)).unwrap();
        let exact = OracleGreen::new(&model, &disc()).unwrap().green(&x, &y).unwrap().value;
        assert!((est.value - exact).abs() / exact < 0.1, "α={alpha}: {} ± {} vs {exact}", est.value, est.stderr);
    }
}
