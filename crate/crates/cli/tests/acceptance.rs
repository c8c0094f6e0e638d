//! Acceptance suite. Each criterion runs one or more experiments through the
//! same configuration path as the `levycensor` binary and prints one line.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::Parser;
use levycensor_cli::output::{report_path, samples_path};
use levycensor_cli::{parse_config, run_experiment, run_outcome, ConfigLayer, ExperimentConfig};
use serde_json::Value;

#[derive(Parser)]
struct Flags {
    #[command(flatten)]
    layer: ConfigLayer,
}

fn config(args: &[&str]) -> Result<ExperimentConfig> {
    let flags = Flags::try_parse_from(std::iter::once("levycensor").chain(args.iter().copied()))?;
    parse_config(None, &flags.layer)
}

/// Runs `levycensor <args>` in-process and returns (pass, result).
fn run(args: &[&str]) -> Result<(bool, Value)> {
    let cfg = config(args)?;
    let outcome = run_outcome(&cfg).with_context(|| format!("levycensor {}", args.join(" ")))?;
    Ok((outcome.pass, outcome.result))
}

fn num(v: &Value, ptr: &str) -> Result<f64> {
    v.pointer(ptr).and_then(Value::as_f64).with_context(|| format!("missing number at {ptr}"))
}

fn criterion_1() -> Result<String> {
    let (pass, r) = run(&["--exp", "green", "--phi", "stable:alpha=1.2", "-N", "100000", "--eps", "2e-3", "--pairs", "5"])?;
    let worst = num(&r, "/max_rel_error")?;
    for p in r["pairs"].as_array().context("pairs")? {
        let x: Vec<f64> = serde_json::from_value(p["x"].clone())?;
        let y: Vec<f64> = serde_json::from_value(p["y"].clone())?;
        let d = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        ensure!(d >= 0.2, "pair separation {d} below 0.2");
    }
    ensure!(pass && worst <= 0.1, "max relative error {worst:.4} exceeds 0.1");
    Ok(format!("max relative error {worst:.4} over 5 pairs (tolerance 0.1)"))
}

fn criterion_2() -> Result<String> {
    let (pass, r) = run(&["--exp", "exitlaw", "--phi", "stable:alpha=1.2", "-N", "1000000", "--eps", "3e-3"])?;
    let tv = num(&r, "/total_variation")?;
    ensure!(pass && tv <= 0.03, "total variation {tv:.4} exceeds 0.03");
    Ok(format!("total variation {tv:.4} (tolerance 0.03)"))
}

fn criterion_3() -> Result<String> {
    let (pass, r) = run(&["--exp", "gauge", "--phi", "stable:alpha=1.2", "--pairs", "10"])?;
    let rows = r["pairs"].as_array().context("pairs")?;
    ensure!(rows.len() == 10, "expected 10 pairs, got {}", rows.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in rows {
        let u = num(row, "/gauge/u/value")?;
        let s = num(row, "/gauge/u/stderr")?;
        ensure!(u >= 1.0 - 3.0 * s, "gauge {u} below 1 - 3σ");
        lo = lo.min(u);
        hi = hi.max(u);
    }
    ensure!(pass, "some gauge outside [1 - 3σ, 2 + 3σ]");
    Ok(format!("u in [{lo:.3}, {hi:.3}] for 10 pairs"))
}

fn criterion_4() -> Result<String> {
    let (pass, r) = run(&["--exp", "lemma41", "--phi", "stable:alpha=1.2", "--r", "0.5"])?;
    let sup = num(&r, "/sup")?;
    ensure!(pass && sup <= 0.5 + 1e-3, "integral {sup:.4} exceeds 0.501");
    Ok(format!("sup of the integral {sup:.4} at r1 = {:.4} from {} (bound 0.501)", num(&r, "/r1")?, r["r1_source"]))
}

fn criterion_5() -> Result<String> {
    let mut parts = Vec::new();
    for alpha in ["0.8", "1.5"] {
        let phi = format!("stable:alpha={alpha}");
        let (pass, r) = run(&["--exp", "equivalence", "--phi", &phi, "-N", "100000"])?;
        let battery = r["battery"].as_array().context("battery")?;
        ensure!(battery.len() == 5, "expected 5 test functions");
        let zmax = battery.iter().map(|b| num(b, "/z")).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        ensure!(pass && zmax <= 3.0, "α = {alpha}: z = {zmax:.2} exceeds 3");
        parts.push(format!("α = {alpha}: max z {zmax:.2}"));
    }
    Ok(parts.join(", "))
}

fn sweep(exp: &str, alpha: &str) -> Result<(bool, Value)> {
    let phi = format!("stable:alpha={alpha}");
    run(&["--exp", exp, "--phi", &phi, "--triples", "20000"])
}

fn criterion_6() -> Result<String> {
    let mut parts = Vec::new();
    for alpha in ["0.8", "1.2"] {
        let (pass, r) = sweep("threeg", alpha)?;
        let sup = num(&r, "/report/ratios/sup")?;
        let trace = r["report"]["refinement_trace"].as_array().context("trace")?;
        ensure!(trace.len() >= 4, "α = {alpha}: fewer than 3 halvings");
        ensure!(pass && sup.is_finite(), "α = {alpha}: sweep failed (sup {sup})");
        parts.push(format!("α = {alpha}: sup {sup:.3}"));
    }
    Ok(parts.join(", "))
}

fn criterion_7() -> Result<String> {
    let mut parts = Vec::new();
    for alpha in ["0.8", "1.2"] {
        let (pass, r) = sweep("gen-threeg", alpha)?;
        let beta = num(&r, "/beta_hat")?;
        let bound = num(&r, "/beta_bound")?;
        let sup = num(&r, "/report/ratios/sup")?;
        ensure!(pass && beta <= bound && sup.is_finite(), "α = {alpha}: β̂ {beta:.3} vs bound {bound:.3}, sup {sup}");
        parts.push(format!("α = {alpha}: β̂ {beta:.3} ≤ {bound:.3}"));
    }
    Ok(parts.join(", "))
}

fn criterion_8() -> Result<String> {
    let (pass, r) = run(&["--exp", "harnack-y", "--phi", "stable:alpha=1.2", "--r-list", "0.05,0.1,0.2"])?;
    let spread = num(&r, "/report/extra/scale_spread")?;
    let constant = num(&r, "/report/extra/constant_data_ratio")?;
    ensure!(pass && spread < 2.0 && constant == 1.0, "spread {spread:.3}, constant-data ratio {constant}");
    Ok(format!("scale spread {spread:.3} (< 2), constant-data ratio {constant}"))
}

fn boundary(args: &[&str]) -> Result<(Vec<f64>, String, bool)> {
    let mut full = vec!["--exp", "boundary", "--horizons", "10,100,1000", "-N", "10000"];
    full.extend_from_slice(args);
    let (pass, r) = run(&full)?;
    let e = &r["experiment"];
    let fractions = e["curve"].as_array().context("curve")?.iter().map(|h| num(h, "/fraction")).collect::<Result<_>>()?;
    let verdict = e["prediction"]["verdict"].as_str().context("verdict")?.to_string();
    Ok((fractions, verdict, pass && e["consistent"].as_bool() == Some(true)))
}

fn criterion_9() -> Result<String> {
    let (f, v, ok) = boundary(&["--phi", "stable:alpha=0.5"])?;
    ensure!(ok && v == "Conservative" && f[2] <= 0.01, "α = 0.5: fractions {f:?}, verdict {v}");
    let (g, w, ok) = boundary(&["--phi", "stable:alpha=1.5"])?;
    ensure!(
        ok && w == "HitsBoundaryAS" && g.windows(2).all(|p| p[0] <= p[1]) && g[2] >= 0.5,
        "α = 1.5: fractions {g:?}, verdict {w}"
    );
    let (h, u, ok) = boundary(&["--phi", "stable:alpha=1.2", "--dim", "1", "--domain", "interval:-1,1"])?;
    ensure!(ok && u == "TransientHitsAS_1d" && h[2] >= 0.9, "interval: fractions {h:?}, verdict {u}");
    Ok(format!(
        "α = 0.5: {:.4} ({v}); α = 1.5: {:.4} ({w}); interval: {:.4} ({u})",
        f[2], g[2], h[2]
    ))
}

fn criterion_10() -> Result<String> {
    let mut worst: f64 = 0.0;
    for alpha in [0.6, 1.0, 1.4] {
        let phi = format!("stable:alpha={alpha}");
        let (_, r) = run(&["--exp", "kernel-info", "--phi", &phi])?;
        for key in ["delta1", "delta2", "delta3", "delta4"] {
            let d = num(&r, &format!("/scaling/{key}"))?;
            ensure!((d - alpha / 2.0).abs() <= 0.01, "α = {alpha}: {key} = {d}");
            worst = worst.max((d - alpha / 2.0).abs());
        }
    }
    Ok(format!("max |δ̂ - α/2| = {worst:.2e} (tolerance 0.01)"))
}

fn criterion_11() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let runs: [&[&str]; 3] = [
        &["--exp", "green", "--domain", "box:0,0,2,1", "-N", "2000", "--pairs", "2", "--seed", "7"],
        &["--exp", "equivalence", "--phi", "stable:alpha=0.8", "-N", "5000", "--seed", "7"],
        &["--exp", "threeg", "--triples", "2000", "--seed", "7"],
    ];
    for args in runs {
        let base = config(args)?;
        let mut bytes = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{}-{k}", base.exp));
            let cfg = ExperimentConfig { out: Some(out.clone()), ..base.clone() };
            run_experiment(&cfg)?;
            bytes.push((fs::read(report_path(&out, cfg.exp))?, fs::read(samples_path(&out, cfg.exp))?));
        }
        ensure!(bytes[0] == bytes[1], "{} outputs differ between runs", base.exp);
    }
    Ok("green, equivalence and threeg reports and samples identical across re-runs".into())
}

type Criterion = fn() -> Result<String>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("oracle Green function", criterion_1),
        ("oracle exit law", criterion_2),
        ("gauge bound", criterion_3),
        ("3G-κ integral bound", criterion_4),
        ("construction equivalence", criterion_5),
        ("3G sweep", criterion_6),
        ("generalized 3G", criterion_7),
        ("Harnack for Y", criterion_8),
        ("boundary trichotomy", criterion_9),
        ("scaling exponents", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.1}s]", k + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {e:#} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
