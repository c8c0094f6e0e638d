use levycensor_core::kernels::killing_rate;
use levycensor_core::pathsim::SimConfig;
use levycensor_core::potential::{GreenSource, OracleGreen};
use levycensor_core::stats::wilson_interval;
use levycensor_core::verify::{
    check_3g, check_carleson, check_generalized_3g, check_harnack_x, check_harnack_y, check_lemma41,
    classify_model, generalized_terms, lemma41_sup, run_boundary_experiment, three_g_ratio, GeneralizedOptions,
    HarnackOptions, Lemma41Method, SweepOptions, Verdict,
};
use levycensor_core::{estimate_scaling_exponents, Domain, LevyModel, ScalingGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc() -> Domain {
    Domain::ball(vec![0.0, 0.0], 1.0).unwrap()
}

fn small_sweep(seed: u64) -> SweepOptions {
    SweepOptions { n_samples: 3000, seed, ..SweepOptions::default() }
}

#[test]
fn three_g_sup_is_finite_and_stable_under_refinement() {
    for alpha in [0.8, 1.2] {
        let m = LevyModel::calibrated_stable(2, alpha).unwrap();
        let g = OracleGreen::new(&m, &disc()).unwrap();
        let r = check_3g(&m, &disc(), &g, &small_sweep(1)).unwrap();
        assert!(r.pass, "{:?}", r.refinement_trace);
        assert_eq!(r.skipped, 0);
        assert!(r.ratios.sup >= r.ratios.p99 && r.ratios.p99 >= r.ratios.median && r.ratios.median > 0.0);
        // Witnesses reproduce their ratios.
        for w in &r.worst_witnesses {
            let again = three_g_ratio(&m, &g, &w.points[0], &w.points[1], &w.points[2]).unwrap().unwrap();
            assert_eq!(again, w.ratio);
        }
    }
}

#[test]
fn three_g_reports_are_reproducible() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let a = check_3g(&m, &disc(), &g, &small_sweep(5)).unwrap();
    let b = check_3g(&m, &disc(), &g, &small_sweep(5)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.samples, b.samples);
}

#[test]
fn midpoint_triples_are_comparable() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ratios = Vec::new();
    for _ in 0..500 {
        let x = disc().sample_interior_margin(0.5, &mut rng).unwrap();
        let z = disc().sample_interior_margin(0.5, &mut rng).unwrap();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 0.5 * (a + b)).collect();
        if let Some(r) = three_g_ratio(&m, &g, &x, &y, &z).unwrap() {
            ratios.push(r);
        }
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo < 10.0, "{lo} {hi}");
    assert!(three_g_ratio(&m, &g, &[0.1, 0.0], &[0.2, 0.0], &[0.1, 0.0]).is_err());
}

#[test]
fn generalized_ratio_collapses_to_three_g_when_y_equals_z() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let x = disc().sample_interior(&mut rng);
        let y = disc().sample_interior(&mut rng);
        let w = disc().sample_interior(&mut rng);
        let three = three_g_ratio(&m, &g, &x, &y, &w).unwrap().unwrap();
        let (base, pre) = generalized_terms(&m, &g, &x, &y, &y, &w).unwrap().unwrap();
        assert_eq!(pre, 1.0);
        assert!((base - three).abs() <= 1e-12 * three);
    }
}

#[test]
fn generalized_exponent_stays_below_twice_delta2() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let s = estimate_scaling_exponents(m.profile(), &ScalingGrid::default()).unwrap();
    let opts = GeneralizedOptions { sweep: small_sweep(6), ..GeneralizedOptions::default() };
    let r = check_generalized_3g(&m, &disc(), &g, &opts, &s).unwrap();
    let beta = r.extra["beta_hat"];
    assert!(r.pass && beta.is_finite() && beta <= 2.0 * s.delta2 + 0.05, "β̂ = {beta}");
}

#[test]
fn harnack_x_constant_is_scale_invariant() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let opts = HarnackOptions { n_pairs: 6, n_paths: 2000, ..HarnackOptions::default() };
    let r = check_harnack_x(&m, &opts, &SimConfig::default()).unwrap();
    assert_eq!(r.extra["constant_data_ratio"], 1.0);
    assert!(r.pass, "{:?}", r.refinement_trace);
    assert!(r.ratios.sup >= 1.0);
}

#[test]
fn harnack_y_constant_data_and_scales() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let opts = HarnackOptions { r_list: vec![0.05, 0.1, 0.2], n_pairs: 6, n_paths: 2000, ..HarnackOptions::default() };
    let r = check_harnack_y(&m, &disc(), &opts, &SimConfig::default()).unwrap();
    assert_eq!(r.extra["constant_data_ratio"], 1.0);
    assert!(r.pass, "{:?}", r.refinement_trace);
    let bad = HarnackOptions { r_list: vec![1.5], ..opts };
    assert!(check_harnack_y(&m, &disc(), &bad, &SimConfig::default()).is_err());
}

#[test]
fn carleson_ratio_is_bounded_and_validated() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let z = [0.0, 1.0];
    let r = check_carleson(&disc(), &g, &z, &[0.1, 0.05, 0.025], &[0.0, -0.5], 2000, 2).unwrap();
    assert!(r.pass, "{:?}", r.refinement_trace);
    assert!(r.samples.iter().any(|s| s.ratio == 1.0));
    // y inside B(z, 3 r0) is rejected.
    assert!(check_carleson(&disc(), &g, &z, &[0.1], &[0.0, 0.8], 10, 2).is_err());
    assert!(check_carleson(&disc(), &g, &[0.0, 0.5], &[0.1], &[0.0, -0.5], 10, 2).is_err());
}

#[test]
fn lemma41_matches_brute_force_grid_and_shrinks_with_r1() {
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let d = disc();
    let (c, r, r1) = ([0.2, 0.1], 0.5, 0.25);
    let rho = r * r1;
    let (v, w) = ([0.2 - 0.5 * rho, 0.1], [0.2 + 0.4 * rho, 0.1 + 0.3 * rho]);
    let value = check_lemma41(&m, &d, r, &c, r1, &v, &w, &Lemma41Method::default()).unwrap();
    // Midpoint rule on a fine Cartesian grid; cells touching v or w are
    // dropped, which loses an integrable O(h^α) piece.
    let b = Domain::ball(c.to_vec(), rho).unwrap();
    let g = OracleGreen::new(&m, &b).unwrap();
    let kappa = killing_rate(&m, &d, 0.0).unwrap();
    let gvw = g.green(&v, &w).unwrap().value;
    let k = 600;
    let h = 2.0 * rho / k as f64;
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let y = [c[0] - rho + (i as f64 + 0.5) * h, c[1] - rho + (j as f64 + 0.5) * h];
            if !b.contains(&y) {
                continue;
            }
            let near = |p: &[f64; 2]| (y[0] - p[0]).abs() < h && (y[1] - p[1]).abs() < h;
            if near(&v) || near(&w) {
                continue;
            }
            sum += g.green(&v, &y).unwrap().value * g.green(&y, &w).unwrap().value / gvw * kappa.rate(&y) * h * h;
        }
    }
    assert!((sum - value).abs() <= 0.03 * value, "grid {sum} vs quadrature {value}");
    let smaller = check_lemma41(&m, &d, r, &c, 0.1, &[0.2 - 0.5 * 0.05, 0.1], &[0.2 + 0.4 * 0.05, 0.1 + 0.3 * 0.05], &Lemma41Method::default()).unwrap();
    assert!(smaller < value);
    assert!(check_lemma41(&m, &d, r, &c, r1, &v, &v, &Lemma41Method::default()).is_err());
    let sups: Vec<f64> = [0.05, 0.1, 0.25]
        .iter()
        .map(|&r1| lemma41_sup(&m, &d, 0.5, &[vec![0.0, 0.0]], r1, &Lemma41Method::default()).unwrap())
        .collect();
    assert!(sups.windows(2).all(|w| w[0] < w[1]), "{sups:?}");
    assert!(sups[2] <= 0.5);
}

#[test]
fn boundary_curve_is_monotone_and_matches_the_verdict() {
    let m = LevyModel::calibrated_stable(2, 1.5).unwrap();
    let cfg = SimConfig { eps_cut: 0.01, boundary_cut_ratio: Some(0.25), seed: 3, ..SimConfig::default() };
    let e = run_boundary_experiment(&m, &disc(), &[0.0, 0.0], &[1.0, 10.0, 100.0], 300, &cfg).unwrap();
    assert_eq!(e.prediction.verdict, Verdict::HitsBoundaryAS);
    assert!(e.curve.windows(2).all(|w| w[0].approached <= w[1].approached));
    assert!(e.curve.iter().all(|f| f.ci_low <= f.fraction && f.fraction <= f.ci_high));
    assert!(e.consistent, "{:?}", e.curve);
    assert_eq!(classify_model(&LevyModel::calibrated_stable(2, 0.5).unwrap(), &disc()).unwrap().verdict, Verdict::Conservative);
}

#[test]
fn wilson_intervals_cover_a_bernoulli_control() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (p, trials, reps) = (0.03, 500u64, 2000);
    let mut covered = 0;
    for _ in 0..reps {
        let k = (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64;
        let (lo, hi) = wilson_interval(k, trials, 1.959964);
        covered += u32::from(lo <= p && p <= hi);
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
}

#[test]
fn green_envelope_and_factorization_constants_are_finite() {
    use levycensor_core::potential::GFunctionSpec;
    use levycensor_core::verify::{check_green_envelope, check_green_factorization};
    let m = LevyModel::calibrated_stable(2, 1.2).unwrap();
    let g = OracleGreen::new(&m, &disc()).unwrap();
    let env = check_green_envelope(&m, &disc(), &g, &small_sweep(9)).unwrap();
    assert!(env.pass && env.fitted_constant.is_finite());
    let spec = GFunctionSpec::from_fitted_c1(&m, &disc(), env.fitted_constant).unwrap();
    let opts = SweepOptions { n_samples: 1000, ..small_sweep(10) };
    let f = check_green_factorization(&m, &disc(), &g, &spec, &opts).unwrap();
    assert!(f.fitted_constant.is_finite() && f.ratios.median >= 1.0, "{:?}", f.ratios);
    assert!(f.skipped < 10 && f.refinement_trace.iter().all(|s| s.sup.is_finite()));
}
