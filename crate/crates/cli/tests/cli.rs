use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cma-lab"))
        .args(args)
        .current_dir(cwd)
        .env("CMA_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = cma(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn subcommands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["mask", "--resolution", "129", "--out", "mask.cmaf"], d);
    let s = ok(&["solve", "--domain", "mask.cmaf", "--f", "formula:cosine:0.05", "--out", "phi.cmaf"], d);
    assert!(s.starts_with("solve:"));
    let phi = ["--phi", "phi.cmaf", "--domain", "mask.cmaf"];
    ok(&[&["lsolve"][..], &phi, &["--bc", "const:2", "--out", "u.cmaf"]].concat(), d);
    ok(&[&["lsolve"][..], &phi, &["--bc", "const:3", "--mode", "monotone", "--out", "v.cmaf"]].concat(), d);

    ok(&[&["sections"][..], &phi, &["--centers", "spiral:4,0.3", "--heights", "0.2,0.1", "--out", "sections.json"]].concat(), d);
    let sec = json(&d.join("sections.json"));
    assert_eq!(sec["records"].as_array().unwrap().len(), 8);

    fs::write(d.join("set.json"), r#"{"kind": "ball", "center": [0.0, 0.0], "radius": 0.2}"#).unwrap();
    ok(&[&["cz"][..], &phi, &["--set", "set.json", "--out", "cover.json"]].concat(), d);
    assert!(json(&d.join("cover.json"))["k_fit"].is_number());

    ok(&[&["harnack"][..], &phi, &["--u", "u.cmaf", "v.cmaf", "--centers", "spiral:5,0.3", "--heights", "0.1,0.05", "--out", "report.json"]].concat(), d);
    let rep = json(&d.join("report.json"));
    // Constant solutions have ratio one at every scale.
    assert!((rep["harnack"]["beta"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    ok(&[&["holder"][..], &phi, &["--u", "u.cmaf", "--report", "report.json", "--out", "fit.json"]].concat(), d);
    assert!(d.join("fit.json").exists());
}

#[test]
fn pipeline_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"name": "cli", "grid": {"resolution": 65}}"#).unwrap();
    let s = ok(&["pipeline", "--config", "cfg.json", "--out", "run"], d);
    assert!(s.contains("pipeline:"));
    assert!(d.join("run/manifest.json").exists());
    ok(&["report", "--in", "run", "--out", "all.csv", "--plots", "plots"], d);
    let csv = fs::read_to_string(d.join("all.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(d.join("run/summary.csv")).unwrap());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"grid": {"resolution": 65}, "unknown": true}"#).unwrap();
    assert_eq!(cma(&["pipeline", "--config", "bad.json"], d).status.code(), Some(2));
    assert_eq!(cma(&["mask", "--resolution", "64", "--out", "m.cmaf"], d).status.code(), Some(2));

    ok(&["mask", "--resolution", "33", "--out", "mask.cmaf"], d);
    let out = cma(&["solve", "--domain", "mask.cmaf", "--f", "const:-1", "--out", "phi.cmaf"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    fs::write(d.join("garbage.cmaf"), b"not a field").unwrap();
    let out = cma(&["lsolve", "--phi", "garbage.cmaf", "--bc", "zero", "--out", "u.cmaf"], d);
    assert_eq!(out.status.code(), Some(2));

    // A coarse grid leaves every section-based constant undetermined.
    fs::write(d.join("coarse.json"), r#"{"name": "coarse", "grid": {"resolution": 33}}"#).unwrap();
    let out = cma(&["pipeline", "--config", "coarse.json", "--out", "coarse", "--assert"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation:"));
}
