//! CLI contract tests: exit codes, artifact layout, determinism flags.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_smms-lab")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("smms-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn list_names_all_experiments() {
    let out = Command::new(bin()).arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "curvature-identities",
        "mass-suite",
        "clifford-suite",
        "warped-dirac",
        "torus-identities",
        "spectra",
        "mu-interpolation",
        "negative-m",
    ] {
        assert!(text.contains(name), "listing is missing {name}");
    }
}

#[test]
fn run_writes_csv_and_json_and_exits_zero() {
    let dir = tmpdir("ok");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "experiment = \"clifford-suite\"\nseed = 3\n").unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = std::fs::read_to_string(dir.join("clifford-suite.json")).unwrap();
    assert!(json.contains("\"experiment\": \"clifford-suite\""));
    let csv = std::fs::read_to_string(dir.join("clifford-suite.csv")).unwrap();
    assert!(csv.starts_with("name,value,tolerance,pass,note"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_changes_provenance() {
    let dir = tmpdir("seed");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "experiment = \"clifford-suite\"\nseed = 3\n").unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .args(["--seed", "99"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json = std::fs::read_to_string(dir.join("clifford-suite.json")).unwrap();
    assert!(json.contains("seed=99"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_experiment_exits_two_without_artifacts() {
    let dir = tmpdir("unknown");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "experiment = \"mystery\"\n").unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    assert!(!dir.join("mystery.json").exists());
    assert!(!dir.join("mystery.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unparseable_config_exits_two() {
    let dir = tmpdir("parse");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "experiment = [not toml").unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_config_exits_two() {
    let out = Command::new(bin())
        .args(["run", "/nonexistent/exp.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn impossible_tolerance_exits_one_and_lists_failures() {
    let dir = tmpdir("tight");
    let config = dir.join("exp.toml");
    std::fs::write(
        &config,
        // The gamma residual is exactly zero in exact arithmetic, so only a
        // negative tolerance is guaranteed impossible.
        "experiment = \"clifford-suite\"\nseed = 3\n\n[tolerances]\n\"gamma-relations-k-le-10\" = -1.0\n",
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL gamma-relations-k-le-10"));
    // Artifacts are still written so the failure can be inspected.
    assert!(dir.join("clifford-suite.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_tolerance_scale_exits_two() {
    let dir = tmpdir("scale");
    let config = dir.join("exp.toml");
    std::fs::write(&config, "experiment = \"clifford-suite\"\n").unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config)
        .args(["--tolerance-scale", "-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
