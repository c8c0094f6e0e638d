use std::fs;
use std::process::Command;

use clap::Parser;
use levycensor_cli::output::{read_samples, report_path, samples_path};
use levycensor_cli::{exit_code, parse_config, run_experiment, ConfigLayer, ExperimentConfig, ExperimentId, Report};

#[derive(Parser)]
struct Flags {
    #[command(flatten)]
    layer: ConfigLayer,
}

fn flags(args: &[&str]) -> ConfigLayer {
    Flags::try_parse_from(std::iter::once("levycensor").chain(args.iter().copied())).unwrap().layer
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levycensor"))
}

#[test]
fn flag_example_parses() {
    let cfg = parse_config(
        None,
        &flags(&["--phi", "stable:alpha=1.2", "--domain", "ball:r=1", "--exp", "threeg", "--triples", "20000", "--seed", "42"]),
    )
    .unwrap();
    assert_eq!(cfg.exp, ExperimentId::Threeg);
    assert_eq!(cfg.triples, Some(20_000));
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.dim, 2);
}

#[test]
fn out_of_range_alpha_cites_h1() {
    let err = parse_config(None, &flags(&["--phi", "stable:alpha=2.5", "--exp", "green"])).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("(H1)"), "{msg}");
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{ "exp": "green", "n_paths": 1000, "phi": "stable:alpha=0.8", "L": 3.0 }"#).unwrap();
    let cfg = parse_config(Some(&path), &flags(&["-N", "5000"])).unwrap();
    assert_eq!(cfg.n_paths, Some(5000));
    assert_eq!(cfg.phi, "stable:alpha=0.8");
    assert_eq!(cfg.l, Some(3.0));
    let file_only = parse_config(Some(&path), &ConfigLayer::default()).unwrap();
    assert_eq!(file_only.n_paths, Some(1000));
}

#[test]
fn malformed_files_report_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, "{\n  \"exp\": \"green\",\n  \"n_pahts\": 10\n}").unwrap();
    let msg = format!("{:#}", parse_config(Some(&path), &ConfigLayer::default()).unwrap_err());
    assert!(msg.contains("line 3") && msg.contains("n_pahts"), "{msg}");
    fs::write(&path, "{\n  \"exp\": \"green\"\n  \"seed\": 1\n}").unwrap();
    let msg = format!("{:#}", parse_config(Some(&path), &ConfigLayer::default()).unwrap_err());
    assert!(msg.contains("line 3"), "{msg}");
    fs::write(&path, r#"{ "exp": "nope" }"#).unwrap();
    assert!(parse_config(Some(&path), &ConfigLayer::default()).is_err());
}

#[test]
fn validation_rejects_inconsistent_configs() {
    let bad = |args: &[&str]| parse_config(None, &flags(args)).is_err();
    assert!(bad(&["--phi", "stable:alpha=1.2"]));
    assert!(bad(&["--exp", "green", "--dim", "1", "--domain", "box:0,0,1,1"]));
    assert!(bad(&["--exp", "green", "--eps=-1"]));
    assert!(bad(&["--exp", "green", "-N", "0"]));
    assert!(bad(&["--exp", "green", "--x0", "0.1"]));
    assert!(bad(&["--exp", "green", "--domain", "disk:r=1"]));
    assert!(!bad(&["--exp", "boundary", "--dim", "1", "--domain", "interval:-1,1", "--x0", "-0.5"]));
}

#[test]
fn config_hash_ignores_output_and_workers() {
    let a = parse_config(None, &flags(&["--exp", "green"])).unwrap();
    let b = ExperimentConfig { out: Some("/elsewhere".into()), workers: Some(3), ..a.clone() };
    let c = ExperimentConfig { seed: 1, ..a.clone() };
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn kernel_info_reports_scaling_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        out: Some(dir.path().into()),
        ..parse_config(None, &flags(&["--exp", "kernel-info"])).unwrap()
    };
    let result = run_experiment(&cfg);
    assert_eq!(exit_code(&result), 0);
    let manifest = result.unwrap();
    manifest.verify_outputs().unwrap();
    assert_eq!(manifest.outputs.len(), 3);
    let report: Report = serde_json::from_str(&fs::read_to_string(report_path(dir.path(), cfg.exp)).unwrap()).unwrap();
    assert_eq!(report.config_hash, cfg.hash());
    for key in ["delta1", "delta2", "delta3", "delta4"] {
        let d = report.result["scaling"][key].as_f64().unwrap();
        assert!((d - 0.6).abs() <= 0.01, "{key} = {d}");
    }
    assert!(!read_samples(&samples_path(dir.path(), cfg.exp)).unwrap().is_empty());
}

#[test]
fn reports_are_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let base = parse_config(None, &flags(&["--exp", "threeg", "--triples", "500", "--seed", "9"])).unwrap();
    let mut bytes = Vec::new();
    for (k, workers) in [None, Some(1), Some(2)].into_iter().enumerate() {
        let out = dir.path().join(k.to_string());
        let cfg = ExperimentConfig { out: Some(out.clone()), workers, ..base.clone() };
        run_experiment(&cfg).unwrap();
        bytes.push((
            fs::read(report_path(&out, cfg.exp)).unwrap(),
            fs::read(samples_path(&out, cfg.exp)).unwrap(),
        ));
    }
    assert!(bytes.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn binary_exit_codes_distinguish_pass_violation_and_error() {
    let dir = tempfile::tempdir().unwrap();
    let ok = bin().args(["--exp", "lemma41"]).env("LEVYCENSOR_OUT_DIR", dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("lemma41.manifest.json").exists());
    // r₁ = 1 puts the κ-integral near 0.8, above the bound 1/2.
    let out = dir.path().join("violation");
    let bad = bin().args(["--exp", "lemma41", "--r1", "1"]).arg("--out").arg(&out).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(out.join("lemma41.report.json").exists());
    let err = bin().args(["--exp", "green", "--phi", "stable:alpha=2.5"]).output().unwrap();
    assert_eq!(err.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&err.stderr).contains("(H1)"));
}

#[test]
fn config_file_runs_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{ "exp": "carleson", "triples": 200, "seed": 5 }"#).unwrap();
    let run = bin().arg("-c").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report: Report =
        serde_json::from_str(&fs::read_to_string(report_path(dir.path(), ExperimentId::Carleson)).unwrap()).unwrap();
    assert_eq!(report.config.triples, Some(200));
    assert!(report.pass);
}
