use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn pksh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pksh")).args(args).output().expect("spawn pksh")
}

#[test]
fn homogenize_writes_coefficients_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = scenario("cosine.toml");
    let o = pksh(&["homogenize", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("coefficients.csv")).unwrap();
    assert!(csv.starts_with("scenario,"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"][0]["stage"], "homogenize");
    assert_eq!(manifest["stages"][0]["status"], "ok");
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("cosine.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("kappa", "kapa")).unwrap();
    let o = pksh(&["run", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kapa"));
}

#[test]
fn unknown_stage_is_rejected() {
    let cfg = scenario("cosine.toml");
    let o = pksh(&["run", "--config", cfg.to_str().unwrap(), "--stage", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_usage_error() {
    assert_eq!(pksh(&["stability"]).status.code(), Some(2));
}
