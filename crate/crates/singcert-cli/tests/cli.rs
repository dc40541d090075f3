use std::path::Path;
use std::process::{Command, Output};

use singcert::{RunConfig, RunReport, SpaceForm};

fn singcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singcert")).args(args).output().expect("binary runs")
}

fn quick_config(dir: &Path, edit: impl FnOnce(&mut RunConfig)) -> String {
    let mut cfg = RunConfig::dubins(SpaceForm::Euclidean, 3);
    cfg.falsifier.n_samples = 6;
    cfg.coercivity.conjugate_steps = 200;
    cfg.certificate.lambda_samples = 16;
    edit(&mut cfg);
    let path = dir.join("run.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn emitted_config_parses_back() {
    let out = singcert(&["dubins", "--N", "4", "--space", "sphere", "--emit-config"]);
    assert!(out.status.success());
    let cfg = RunConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::dubins(SpaceForm::Sphere, 4));
}

#[test]
fn certified_run_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out/report.json");
    let det = dir.path().join("out/det.csv");
    let cfg = quick_config(dir.path(), |c| {
        c.outputs.report = Some(report.to_string_lossy().into_owned());
        c.outputs.det_trace_csv = Some(det.to_string_lossy().into_owned());
    });
    let out = singcert(&["check", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = RunReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep.verdict, singcert::OverallVerdict::OptimalityCertified);
    let csv = std::fs::read_to_string(&det).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,det,min_singular_value"));
    assert!(lines.all(|l| l.split(',').count() == 3));
}

#[test]
fn flipped_drift_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| c.drift_sign = -1.0);
    assert_eq!(singcert(&["check", &cfg]).status.code(), Some(2));
}

#[test]
fn unknown_keys_are_operational_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"horizon": 1.0, "colour": "blue"}"#).unwrap();
    let out = singcert(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |c| c.checks = vec![singcert::Stage::Conditions, singcert::Stage::Falsifier]);
    let a = singcert(&["check", &cfg]);
    let b = singcert(&["check", &cfg]);
    // no coercivity stage, so the run cannot certify
    assert_eq!(a.status.code(), Some(2));
    assert_eq!(b.status.code(), Some(2));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_without_values_prints_an_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), |_| {});
    let out = singcert(&["sweep", &cfg, "--param", "N", "--values"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "[]");
}
