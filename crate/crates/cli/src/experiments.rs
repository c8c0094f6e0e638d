//! Experiment dispatch. Each experiment returns a pass flag, a JSON result
//! and flat sample rows; writing them out is left to [`crate::output`].

use anyhow::{bail, ensure, Context, Result};
use levycensor_core::kernels::{big_phi, killing_density, levy_density, small_jump_variance, tail_mass};
use levycensor_core::pathsim::{censored_battery, fk_battery, SimConfig, TestFn};
use levycensor_core::potential::{
    default_rho, estimate_gauge, estimate_green_pair, exit_distribution, oracle_radial_exit_masses, ExitMesh,
};
use levycensor_core::verify::{
    calibrate_r1, check_3g, check_carleson, check_generalized_3g, check_harnack_x, check_harnack_y, check_lemma41,
    classify_model, run_boundary_experiment, GeneralizedOptions, HarnackOptions, Lemma41Method, SweepOptions,
    DEFAULT_R1, LEMMA41_PAIRS,
};
use levycensor_core::{
    estimate_scaling_exponents, Domain, GreenSource, InequalityReport, LevyModel, MonteCarloGreen, OracleGreen,
    ScalingGrid, Shape,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentId};

/// One row of the flat sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample: usize,
    pub label: String,
    pub level: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub reference: Option<f64>,
}

/// Result of one experiment before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub result: Value,
    pub samples: Vec<SampleRow>,
}

/// Relative tolerance of the Green estimates against the classical formula.
pub const GREEN_REL_TOL: f64 = 0.1;
/// Largest total-variation distance of the binned exit law.
pub const EXIT_TV_TOL: f64 = 0.03;
/// Upper bound of the κ-integral, with quadrature slack.
pub const LEMMA41_BOUND: f64 = 0.5 + 1e-3;
/// Standard errors allowed between the two constructions.
pub const EQUIVALENCE_SIGMAS: f64 = 3.0;
/// Bisection steps for the default r₁.
pub const R1_BISECTION_STEPS: usize = 10;

/// Pairs (x, y) in units of the inradius around the incentre; |x − y| ≥ 0.4.
pub const GREEN_PAIRS: [([f64; 2], [f64; 2]); 5] = [
    ([-0.3, 0.1], [0.3, 0.0]),
    ([0.0, 0.0], [0.5, 0.0]),
    ([-0.5, -0.2], [0.0, 0.3]),
    ([0.2, 0.6], [0.1, 0.2]),
    ([-0.6, 0.0], [-0.2, -0.4]),
];

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.exp {
        ExperimentId::KernelInfo => kernel_info(cfg),
        ExperimentId::Green => green(cfg),
        ExperimentId::Exitlaw => exitlaw(cfg),
        ExperimentId::Gauge => gauge(cfg),
        ExperimentId::Threeg => threeg(cfg),
        ExperimentId::GenThreeg => gen_threeg(cfg),
        ExperimentId::HarnackX => harnack(cfg, false),
        ExperimentId::HarnackY => harnack(cfg, true),
        ExperimentId::Carleson => carleson(cfg),
        ExperimentId::Lemma41 => lemma41(cfg),
        ExperimentId::Boundary => boundary(cfg),
        ExperimentId::Equivalence => equivalence(cfg),
    }
    .with_context(|| format!("experiment `{}` failed", cfg.exp))
}

/// `c + scale·(p₀e₁ + p₁e₂)`, dropping p₁ in one dimension.
fn place(c: &[f64], scale: f64, p: [f64; 2]) -> Vec<f64> {
    let mut x = c.to_vec();
    x[0] += scale * p[0];
    if x.len() > 1 {
        x[1] += scale * p[1];
    }
    x
}

fn frame(d: &Domain) -> (Vec<f64>, f64) {
    (d.incenter(), d.inradius())
}

fn green_source(cfg: &ExperimentConfig, model: &LevyModel, b: &Domain) -> (Box<dyn GreenSource>, &'static str) {
    match OracleGreen::new(model, b) {
        Ok(g) => (Box::new(g), "classical"),
        Err(_) => (
            Box::new(MonteCarloGreen {
                model: model.clone(),
                domain: b.clone(),
                cfg: cfg.sim_config(b),
                n_paths: cfg.n_paths.unwrap_or(2000),
            }),
            "monte-carlo",
        ),
    }
}

fn report_rows(r: &InequalityReport) -> Vec<SampleRow> {
    r.samples
        .iter()
        .map(|s| SampleRow {
            sample: s.index,
            label: r.name.clone(),
            level: Some(s.level),
            value: s.ratio,
            stderr: None,
            reference: None,
        })
        .collect()
}

fn sweep_options(cfg: &ExperimentConfig, d: &Domain, default_triples: usize) -> SweepOptions {
    let rad = d.inradius();
    SweepOptions {
        n_samples: cfg.triples.unwrap_or(default_triples),
        margins: cfg.margins.clone().unwrap_or_else(|| [0.1, 0.05, 0.025, 0.0125].iter().map(|m| m * rad).collect()),
        seed: cfg.seed,
        ..SweepOptions::default()
    }
}

fn kernel_info(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let scaling = estimate_scaling_exponents(model.profile(), &ScalingGrid::default())?;
    let eps = cfg.eps.unwrap_or(cfg.sim_config(&d).eps_cut);
    let mut c1: f64 = 0.0;
    for k in 0..=396 {
        let r = 1.0 + 0.25 * k as f64;
        c1 = c1.max(levy_density(&model, r)? / levy_density(&model, r + 1.0)?);
    }
    let mut samples = Vec::new();
    for k in 0..=20 {
        let r = 10f64.powf(-3.0 + 0.25 * k as f64);
        for (label, v) in [
            ("levy_density", levy_density(&model, r)?),
            ("tail_mass", tail_mass(&model, r)?),
            ("big_phi", big_phi(model.profile(), r)?),
        ] {
            samples.push(SampleRow { sample: k, label: label.into(), level: Some(r), value: v, stderr: None, reference: None });
        }
    }
    let kappa = killing_density(&model, &d, &d.incenter())?;
    let prediction = classify_model(&model, &d).ok();
    Ok(Outcome {
        pass: scaling.valid,
        result: json!({
            "profile": model.profile().to_string(),
            "dim": model.dim(),
            "calibration": model.calibration(),
            "scaling": scaling,
            "c1": c1,
            "eps": eps,
            "tail_mass": tail_mass(&model, eps)?,
            "small_jump_variance": small_jump_variance(&model, eps)?,
            "killing_density_at_incenter": kappa.value,
            "prediction": prediction,
        }),
        samples,
    })
}

fn green(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let b = cfg.domain()?;
    let (c, rad) = frame(&b);
    let n_pairs = cfg.pairs.unwrap_or(GREEN_PAIRS.len());
    ensure!(n_pairs <= GREEN_PAIRS.len(), "at most {} Green pairs are defined", GREEN_PAIRS.len());
    let n = cfg.n_paths.unwrap_or(100_000);
    let sim = cfg.sim_config(&b);
    let oracle = OracleGreen::new(&model, &b).ok();
    let mut pairs = Vec::new();
    let mut samples = Vec::new();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (k, (px, py)) in GREEN_PAIRS.iter().take(n_pairs).enumerate() {
        let (x, y) = (place(&c, rad, *px), place(&c, rad, *py));
        let rho = cfg.rho.unwrap_or_else(|| default_rho(&b, &x, &y).min(0.03 * rad));
        let est = estimate_green_pair(&model, &b, &x, &y, rho, n, &sim.derived(k as u64))?;
        let reference = oracle.as_ref().map(|g| g.green(&x, &y)).transpose()?.map(|e| e.value);
        let rel = reference.map(|g| (est.value - g).abs() / g);
        if let Some(rel) = rel {
            worst = worst.max(rel);
            pass &= rel <= GREEN_REL_TOL;
        }
        samples.push(SampleRow {
            sample: k,
            label: "green".into(),
            level: Some(rho),
            value: est.value,
            stderr: Some(est.stderr),
            reference,
        });
        pairs.push(json!({ "x": x, "y": y, "rho": rho, "estimate": est, "reference": reference, "rel_error": rel }));
    }
    Ok(Outcome {
        pass,
        result: json!({
            "n_paths": n,
            "eps": sim.eps_cut,
            "reference": if oracle.is_some() { "classical" } else { "none" },
            "tolerance": GREEN_REL_TOL,
            "max_rel_error": oracle.is_some().then_some(worst),
            "pairs": pairs,
        }),
        samples,
    })
}

fn exitlaw(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let b = cfg.domain()?;
    let (c, rad) = frame(&b);
    let x0 = cfg.x0.clone().unwrap_or_else(|| c.clone());
    let n = cfg.n_paths.unwrap_or(100_000);
    let radii: Vec<f64> = [1.0, 1.05, 1.1, 1.2, 1.35, 1.5, 2.0, 3.0, 5.0, 10.0].iter().map(|r| r * rad).collect();
    let mesh = ExitMesh { center: c.clone(), radii: radii.clone(), angular_bins: 8 };
    let sim = cfg.sim_config(&b);
    let h = exit_distribution(&model, &b, &x0, &mesh, n, &sim)?;
    let centred_ball = matches!(b.shape(), Shape::Ball { .. }) && x0 == c;
    let reference = if model.profile().is_pure_power() && centred_ball {
        Some(oracle_radial_exit_masses(model.profile().alpha(), rad, &radii)?)
    } else {
        None
    };
    let radial = h.radial_masses();
    let tv = reference
        .as_ref()
        .map(|q| 0.5 * (radial.iter().zip(q).map(|(p, q)| (p - q).abs()).sum::<f64>() + h.capped_fraction));
    let samples = h
        .masses
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let p: f64 = row.iter().map(|e| e.value).sum();
            SampleRow {
                sample: k,
                label: "radial_mass".into(),
                level: Some(radii[k]),
                value: p,
                stderr: Some((p * (1.0 - p) / n as f64).sqrt()),
                reference: reference.as_ref().map(|q| q[k]),
            }
        })
        .collect();
    let pass = h.capped_fraction <= 0.01 && tv.is_none_or(|tv| tv <= EXIT_TV_TOL);
    Ok(Outcome {
        pass,
        result: json!({
            "x0": x0,
            "n_paths": n,
            "eps": sim.eps_cut,
            "radii": radii,
            "radial_masses": radial,
            "reference_masses": reference,
            "total_variation": tv,
            "tolerance": EXIT_TV_TOL,
            "capped_fraction": h.capped_fraction,
            "histogram": h,
        }),
        samples,
    })
}

/// Centres for the κ-integral balls: the incentre and a point at depth just
/// above r towards ∂D.
fn lemma_centres(d: &Domain, r: f64) -> Result<Vec<Vec<f64>>> {
    let (c, rad) = frame(d);
    if r > rad {
        bail!("r = {r} exceeds the inradius {rad} of the domain");
    }
    let shifted = place(&c, 0.98 * (rad - r), [1.0, 0.0]);
    Ok(if shifted == c { vec![c] } else { vec![c, shifted] })
}

/// r₁ and its source: the configured value, else the bisection value when the
/// classical Green function applies, else [`DEFAULT_R1`].
fn resolve_r1(cfg: &ExperimentConfig, model: &LevyModel, d: &Domain, r: f64, centres: &[Vec<f64>]) -> Result<(f64, &'static str)> {
    if let Some(r1) = cfg.r1 {
        ensure!(r1 > 0.0 && r1 <= 1.0, "r1 must lie in (0, 1]");
        return Ok((r1, "config"));
    }
    if OracleGreen::new(model, &Domain::ball(centres[0].clone(), r)?).is_ok() {
        return Ok((calibrate_r1(model, d, r, centres, 0.5, R1_BISECTION_STEPS)?, "bisection"));
    }
    Ok((DEFAULT_R1, "fixed"))
}

fn gauge(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let r = cfg.r.unwrap_or(0.5 * d.inradius());
    let centres = lemma_centres(&d, r)?;
    let (r1, r1_source) = resolve_r1(cfg, &model, &d, r, &centres)?;
    let radius = r1 * r;
    let n = cfg.n_paths.unwrap_or(20_000);
    let wanted = cfg.pairs.unwrap_or(10);
    let sites: Vec<_> = LEMMA41_PAIRS
        .iter()
        .flat_map(|p| centres.iter().map(move |c| (c.clone(), *p)))
        .take(wanted)
        .collect();
    ensure!(sites.len() == wanted, "at most {} gauge pairs are defined", LEMMA41_PAIRS.len() * centres.len());
    let mut pass = true;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (k, (c, (pv, pw))) in sites.iter().enumerate() {
        let b = Domain::ball(c.clone(), radius)?;
        let (v, w) = (place(c, radius, *pv), place(c, radius, *pw));
        let sim = SimConfig { eps_cut: cfg.eps.unwrap_or(0.01 * radius), ..cfg.sim_config(&b) };
        let rho = cfg.rho.unwrap_or_else(|| default_rho(&b, &v, &w));
        let g = estimate_gauge(&model, &d, &b, &v, &w, rho, n, &sim.derived(k as u64))?;
        let (u, s) = (g.u.value, g.u.stderr);
        let ok = !g.indeterminate && u >= 1.0 - 3.0 * s && u <= 2.0 + 3.0 * s;
        pass &= ok;
        samples.push(SampleRow { sample: k, label: "gauge".into(), level: Some(radius), value: u, stderr: Some(s), reference: None });
        rows.push(json!({ "center": c, "v": v, "w": w, "rho": rho, "gauge": g, "within_bounds": ok }));
    }
    Ok(Outcome {
        pass,
        result: json!({ "r": r, "r1": r1, "r1_source": r1_source, "ball_radius": radius, "n_paths": n, "pairs": rows }),
        samples,
    })
}

fn threeg(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let b = cfg.domain()?;
    let (green, kind) = green_source(cfg, &model, &b);
    let opts = sweep_options(cfg, &b, if kind == "classical" { 20_000 } else { 200 });
    let report = check_3g(&model, &b, green.as_ref(), &opts)?;
    Ok(Outcome {
        pass: report.pass,
        samples: report_rows(&report),
        result: json!({ "green_source": kind, "margins": opts.margins, "report": report }),
    })
}

fn gen_threeg(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let b = cfg.domain()?;
    let (green, kind) = green_source(cfg, &model, &b);
    let scaling = estimate_scaling_exponents(model.profile(), &ScalingGrid::default())?;
    let opts = GeneralizedOptions {
        sweep: sweep_options(cfg, &b, if kind == "classical" { 20_000 } else { 200 }),
        ..GeneralizedOptions::default()
    };
    let report = check_generalized_3g(&model, &b, green.as_ref(), &opts, &scaling)?;
    let beta_hat = report.extra.get("beta_hat").copied().unwrap_or(f64::NAN);
    let beta_ok = beta_hat <= 2.0 * scaling.delta2 + 0.05;
    Ok(Outcome {
        pass: report.pass && beta_ok,
        samples: report_rows(&report),
        result: json!({
            "green_source": kind,
            "beta_hat": beta_hat,
            "beta_bound": 2.0 * scaling.delta2 + 0.05,
            "report": report,
        }),
    })
}

fn harnack(cfg: &ExperimentConfig, censored: bool) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let defaults = HarnackOptions::default();
    let opts = HarnackOptions {
        r_list: cfg
            .r_list
            .clone()
            .unwrap_or_else(|| if censored { vec![0.05, 0.1, 0.2] } else { defaults.r_list.clone() }),
        l: cfg.l.unwrap_or(defaults.l),
        n_pairs: cfg.pairs.unwrap_or(defaults.n_pairs),
        n_paths: cfg.n_paths.unwrap_or(defaults.n_paths),
        seed: cfg.seed,
        eps_rel: cfg.eps.unwrap_or(defaults.eps_rel),
        ..defaults
    };
    let sim = cfg.sim_config(&d);
    let report = if censored { check_harnack_y(&model, &d, &opts, &sim)? } else { check_harnack_x(&model, &opts, &sim)? };
    Ok(Outcome {
        pass: report.pass,
        samples: report_rows(&report),
        result: json!({ "options": opts, "report": report }),
    })
}

fn carleson(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let b = cfg.domain()?;
    let (c, rad) = frame(&b);
    let (green, kind) = green_source(cfg, &model, &b);
    let z = b.nearest_boundary_point(&place(&c, 0.5 * rad, [1.0, 0.0]));
    let y = place(&c, 0.5 * rad, [-1.0, 0.0]);
    let r0_list = cfg.r_list.clone().unwrap_or_else(|| [0.2, 0.1, 0.05].iter().map(|r| r * rad).collect());
    let n = cfg.triples.unwrap_or(if kind == "classical" { 2000 } else { 50 });
    let report = check_carleson(&b, green.as_ref(), &z, &r0_list, &y, n, cfg.seed)?;
    Ok(Outcome {
        pass: report.pass,
        samples: report_rows(&report),
        result: json!({ "green_source": kind, "z": z, "y": y, "r0_list": r0_list, "report": report }),
    })
}

fn lemma41(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let r = cfg.r.unwrap_or(0.5 * d.inradius());
    let centres = lemma_centres(&d, r)?;
    let (r1, r1_source) = resolve_r1(cfg, &model, &d, r, &centres)?;
    let probe = Domain::ball(centres[0].clone(), r1 * r)?;
    let oracle = OracleGreen::new(&model, &probe).is_ok();
    let method = if oracle {
        Lemma41Method::default()
    } else {
        Lemma41Method::MonteCarlo {
            n_paths: cfg.n_paths.unwrap_or(1000),
            cfg: SimConfig { eps_cut: cfg.eps.unwrap_or(0.01 * r1 * r), ..cfg.sim_config(&probe) },
            angular: 12,
            radial: 12,
        }
    };
    let mut samples = Vec::new();
    let mut sup: f64 = 0.0;
    for c in &centres {
        for (pv, pw) in LEMMA41_PAIRS {
            let (v, w) = (place(c, r1 * r, pv), place(c, r1 * r, pw));
            let value = check_lemma41(&model, &d, r, c, r1, &v, &w, &method)?;
            sup = sup.max(value);
            samples.push(SampleRow {
                sample: samples.len(),
                label: "lemma41".into(),
                level: Some(r1),
                value,
                stderr: None,
                reference: None,
            });
        }
    }
    Ok(Outcome {
        pass: sup <= LEMMA41_BOUND,
        result: json!({
            "r": r,
            "r1": r1,
            "r1_source": r1_source,
            "centres": centres,
            "method": method,
            "sup": sup,
            "bound": LEMMA41_BOUND,
        }),
        samples,
    })
}

fn boundary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let (c, rad) = frame(&d);
    let x0 = cfg.x0.clone().unwrap_or(c);
    let horizons = cfg.horizons.clone().unwrap_or_else(|| vec![10.0, 100.0, 1000.0]);
    let n = cfg.n_paths.unwrap_or(10_000);
    let base = cfg.sim_config(&d);
    let sim = SimConfig {
        eps_cut: cfg.eps.unwrap_or(0.01 * rad),
        boundary_cut_ratio: if cfg.gaussian { None } else { Some(cfg.boundary_cut_ratio.unwrap_or(0.25)) },
        ..base
    };
    let e = run_boundary_experiment(&model, &d, &x0, &horizons, n, &sim)?;
    let samples = e
        .curve
        .iter()
        .enumerate()
        .map(|(k, f)| SampleRow {
            sample: k,
            label: "approach_fraction".into(),
            level: Some(f.horizon),
            value: f.fraction,
            stderr: Some((f.fraction * (1.0 - f.fraction) / n as f64).sqrt()),
            reference: None,
        })
        .collect();
    Ok(Outcome {
        pass: e.consistent,
        result: json!({ "eps": sim.eps_cut, "boundary_cut_ratio": sim.boundary_cut_ratio, "experiment": e }),
        samples,
    })
}

fn equivalence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let d = cfg.domain()?;
    let (c, rad) = frame(&d);
    let x0 = cfg.x0.clone().unwrap_or_else(|| c.clone());
    let t = cfg.time.unwrap_or(0.2);
    let n = cfg.n_paths.unwrap_or(100_000);
    let sim = SimConfig { eps_cut: cfg.eps.unwrap_or(0.02 * rad), ..cfg.sim_config(&d) };
    let rel = |x: &[f64]| -> Vec<f64> { x.iter().zip(&c).map(|(a, b)| (a - b) / rad).collect() };
    let one = |_: &[f64]| 1.0;
    let radius_sq = |x: &[f64]| rel(x).iter().map(|u| u * u).sum::<f64>();
    let positive_part = |x: &[f64]| rel(x)[0].max(0.0);
    let bump = |x: &[f64]| (-2.0 * rel(x).iter().map(|u| u * u).sum::<f64>()).exp();
    let near_boundary = |x: &[f64]| if d.dist_to_boundary(x) < 0.2 * rad { 1.0 } else { 0.0 };
    let battery: [(&str, TestFn<'_>); 5] = [
        ("one", &one),
        ("radius_sq", &radius_sq),
        ("positive_part", &positive_part),
        ("bump", &bump),
        ("near_boundary", &near_boundary),
    ];
    let fs: Vec<TestFn<'_>> = battery.iter().map(|(_, f)| *f).collect();
    let fk = fk_battery(&model, &d, &x0, t, &fs, &sim, n)?;
    let inw = censored_battery(&model, &d, &x0, t, &fs, &sim.derived(1), n)?;
    // Kish effective sample size of the Feynman–Kac weights, from the f ≡ 1 estimate.
    let w = fk[0];
    let second = w.value * w.value + w.stderr * w.stderr * w.n_paths as f64;
    let ess = if second > 0.0 { w.n_paths as f64 * w.value * w.value / second } else { 0.0 };
    let mut pass = true;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (k, ((name, _), (a, b))) in battery.iter().zip(fk.iter().zip(&inw)).enumerate() {
        let sigma = a.combined_stderr(b);
        let z = if sigma > 0.0 { (a.value - b.value).abs() / sigma } else if a.value == b.value { 0.0 } else { f64::INFINITY };
        pass &= z <= EQUIVALENCE_SIGMAS;
        samples.push(SampleRow {
            sample: k,
            label: (*name).into(),
            level: Some(t),
            value: b.value,
            stderr: Some(b.stderr),
            reference: Some(a.value),
        });
        rows.push(json!({ "function": name, "inw": b, "feynman_kac": a, "z": z }));
    }
    Ok(Outcome {
        pass,
        result: json!({
            "x0": x0,
            "time": t,
            "n_paths": n,
            "eps": sim.eps_cut,
            "sigmas": EQUIVALENCE_SIGMAS,
            "fk_effective_sample_size": ess,
            "battery": rows,
        }),
        samples,
    })
}
