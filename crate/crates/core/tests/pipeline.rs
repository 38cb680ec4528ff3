use std::fs;

use cma_lab::cz::SetSpec;
use cma_lab::experiment::{run_pipeline, ExperimentConfig, Manifest};
use cma_lab::report::{summarize, CSV_HEADER};
use sha2::{Digest, Sha256};

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { name: name.into(), ..Default::default() };
    cfg.grid.resolution = 65;
    cfg
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&small("tiny"), Some(dir.path())).unwrap();
    assert_eq!(run.manifest.status, "ok");
    let names: Vec<&str> = run.manifest.files.iter().map(|f| f.file.as_str()).collect();
    for expected in [
        "config.json",
        "phi.cmaf",
        "mask.cmaf",
        "u_00.cmaf",
        "family.json",
        "sections.json",
        "cover.json",
        "report.json",
        "fit.json",
        "summary.csv",
    ] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    for entry in &run.manifest.files {
        let bytes = fs::read(dir.path().join(&entry.file)).unwrap();
        assert_eq!(bytes.len() as u64, entry.bytes, "{}", entry.file);
        assert_eq!(hex::encode(Sha256::digest(&bytes)), entry.sha256, "{}", entry.file);
    }
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, run.manifest);
    assert_eq!(on_disk.config_hash, small("tiny").hash());

    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("tiny,")));
}

#[test]
fn failing_stage_keeps_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("broken");
    cfg.cz.set = SetSpec::Ball { center: vec![0.7, 0.0], radius: 0.1 };
    let err = run_pipeline(&cfg, Some(dir.path())).unwrap_err();
    assert!(err.to_string().contains("cz"), "{err}");
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.status, "failed");
    assert_eq!(m.failed_stage.as_deref(), Some("cz"));
    assert!(m.error.is_some());
    let names: Vec<&str> = m.files.iter().map(|f| f.file.as_str()).collect();
    assert!(names.contains(&"phi.cmaf") && names.contains(&"sections.json"));
    assert!(!names.contains(&"cover.json") && !names.contains(&"report.json"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn corrupted_inputs_are_skipped_with_a_note() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small("ok"), Some(dir.path())).unwrap();
    let good = summarize(&[dir.path().to_path_buf()]).unwrap();
    fs::write(dir.path().join("fit.json"), "{ not json").unwrap();
    let bad = summarize(&[dir.path().to_path_buf()]).unwrap();
    assert!(bad.notes.iter().any(|n| n.contains("fit.json") && n.contains("unreadable")));
    assert!(bad.rows < good.rows);
    assert!(!bad.csv.contains(",alpha,"));
    assert!(bad.csv.contains(",beta,"));
}

#[test]
fn invalid_configuration_is_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("bad");
    cfg.grid.resolution = 64;
    assert!(run_pipeline(&cfg, Some(&dir.path().join("out"))).is_err());
    assert!(!dir.path().join("out").exists());
}
