//! End-to-end CLI checks: exit codes, preset pipelines, and byte-level
//! determinism of the smoke suite.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn labcli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labcli"))
}

fn repo_preset(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn validate_accepts_shipped_presets() {
    for preset in [
        "heat-1d-acceptance.json",
        "heat-2d-scaling.json",
        "cellular-davies.json",
        "cellular-decay.json",
    ] {
        let out = labcli()
            .args(["validate", "--config", &repo_preset(preset)])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{preset}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn heat_acceptance_preset_passes_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = labcli()
        .args([
            "solve",
            "--config",
            &repo_preset("heat-1d-acceptance.json"),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("[PASS]"));
    assert!(!text.contains("[FAIL]"));
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("fit_points.csv").exists());
    assert!(dir.path().join("davies_series.csv").exists());
}

#[test]
fn bad_config_exits_with_code_2_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // eps sweep radius below the resolvability floor 2h
    std::fs::write(
        &path,
        r#"{
            "schema_version": 1,
            "grid": {"n": 1, "m": 1, "l": 1.0, "nx": 64, "dt": 0.0001, "t0": 0.0, "t1": 0.01},
            "coefficients": {"kind": "heat"},
            "source": {"s": 0.005, "x": [0.5], "k": 0, "eps": 0.05},
            "probes": {"eps_sweep": [0.02, 0.05, 0.1]}
        }"#,
    )
    .unwrap();
    let start = Instant::now();
    let out = labcli()
        .args(["solve", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // validation rejects the config without touching the solver
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn injected_bad_tolerance_fails_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.json");
    // an identity tolerance below roundoff forces the mass row to fail
    std::fs::write(
        &path,
        r#"{
            "schema_version": 1,
            "grid": {"n": 1, "m": 1, "l": 1.0, "nx": 64, "dt": 0.000244140625,
                     "t0": 0.0, "t1": 0.0625},
            "coefficients": {"kind": "heat"},
            "source": {"s": 0.015625, "x": [0.5], "k": 0, "eps": 0.0625},
            "tolerances": {"identity_tol": 1e-18}
        }"#,
    )
    .unwrap();
    let out = labcli()
        .args(["fundsol", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[FAIL] mass-conservation"), "{text}");
}

#[test]
fn smoke_suite_is_deterministic_and_fast() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let out = labcli()
            .args([
                "suite",
                "--level",
                "smoke",
                "--seed",
                "7",
                "--out",
                dir.path().to_str().unwrap(),
            ])
            .output()
            .unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(
            out.status.success(),
            "{}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(elapsed < 60.0, "smoke suite took {elapsed:.1} s");
        let mut files = std::collections::BTreeMap::new();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name().into_string().unwrap();
            if name.ends_with(".csv") {
                files.insert(name, std::fs::read(entry.path()).unwrap());
            }
        }
        assert!(!files.is_empty());
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1], "smoke CSV artifacts differ between runs");
}
