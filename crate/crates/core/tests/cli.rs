use std::path::PathBuf;
use std::process::{Command, Output};

fn gaplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaplab")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gaplab-cli-{name}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

#[test]
fn ids_prints_json() {
    let out = gaplab(&["ids", "--potential", "zero", "--energy", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 1.0 / std::f64::consts::PI).abs() < 2e-3);
}

#[test]
fn errors_exit_with_one() {
    let out = gaplab(&["ids", "--potential", "not-a-potential", "--energy", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = gaplab(&["rotation", "--config", "/nonexistent/gaplab.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spectrum_writes_gaps_and_scan() {
    let dir = scratch("spectrum");
    let d = dir.to_str().unwrap();
    let out = gaplab(&[
        "spectrum", "--energy-min", "-2", "--energy-max", "1", "--resolution", "0.02", "--out", d,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let gaps: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("gaps.json")).unwrap()).unwrap();
    assert_eq!(gaps.as_array().unwrap().len(), 1);
    let scan = std::fs::read_to_string(dir.join("ids_scan.csv")).unwrap();
    assert!(scan.lines().count() > 100);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_from_config_writes_all_outputs() {
    let dir = scratch("report");
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        "[scan]\nenergy_min = -2.0\nenergy_max = 1.0\nresolution = 0.02\n\
         [xi_chain]\ncenter = 0.0\nscale = 3.141592653589793\nratio = 2.0\ncount = 2\n\
         [numerics]\ntruncation = 40.0\ntrace_dxi = 0.05\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = gaplab(&["report", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["report.json", "ids_scan.csv", "flow_curves.csv", "phase_lift.csv", "trace_integrand.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn converge_rejects_unknown_parameter() {
    let out = gaplab(&["converge", "--parameter", "nope", "--values", "1,2"]);
    assert_eq!(out.status.code(), Some(1));
}
