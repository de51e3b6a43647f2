use std::path::{Path, PathBuf};
use std::process::Command;

use siplab::harness::RunManifest;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn siplab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_siplab"))
        .args(args)
        .env_remove("SIPLAB_THREADS")
        .output()
        .expect("binary runs");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().expect("exit code"), text)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = siplab(&["hydro", "--out", p(dir.path())]);
    assert_eq!(code, 2);
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture("hydro.toml")).unwrap().replace("[sim]", "[sim]\nhorizn = 1.0");
    std::fs::write(&bad, text).unwrap();
    let (code, msg) = siplab(&["hydro", "--config", p(&bad), "--out", p(dir.path())]);
    assert_eq!(code, 2, "{msg}");
    let (code, _) = siplab(&["duality-check", "--config", p(&fixture("hydro.toml")), "--out", p(dir.path())]);
    assert_eq!(code, 2);
    let (code, _) = siplab(&["hydro", "--config", p(&fixture("hydro.toml")), "--out", p(dir.path()), "--replicas", "0"]);
    assert_eq!(code, 2);
}

#[test]
fn hydro_runs_are_reproducible_and_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("hydro.toml");
    let (code, msg) = siplab(&["hydro", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code, 0, "{msg}");
    let first = manifest(dir.path());
    let (code, msg) = siplab(&["hydro", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code, 2, "collision must be refused: {msg}");
    let (code, _) = siplab(&["hydro", "--config", p(&cfg), "--out", p(dir.path()), "--force", "--threads", "2"]);
    assert_eq!(code, 0);
    let second = manifest(dir.path());
    assert_eq!(first.config_sha256, second.config_sha256);
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first.streams, second.streams);
    let (code, _) = siplab(&["hydro", "--config", p(&cfg), "--out", p(dir.path()), "--force", "--seed", "12"]);
    assert_eq!(code, 0);
    let third = manifest(dir.path());
    assert_ne!(first.config_sha256, third.config_sha256);
    assert_ne!(first.outputs, third.outputs);
}

#[test]
fn sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = siplab(&["sweep", "--config", p(&fixture("hydro.toml")), "--out", p(dir.path())]);
    assert_eq!(code, 0, "{msg}");
    assert!(msg.contains("l1_error"));
    assert!(manifest(dir.path()).sweep.is_some());
}

#[test]
fn tiny_duality_oracle_passes_check() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = siplab(&["duality-check", "--config", p(&fixture("duality.toml")), "--out", p(dir.path()), "--check"]);
    assert_eq!(code, 0, "{msg}");
    let m = manifest(dir.path());
    assert_eq!(m.verdicts.len(), 6);
    assert!(m.passed());
    let csv = std::fs::read_to_string(dir.path().join("duality.csv")).unwrap();
    for row in csv.lines().skip(1) {
        assert!(!row.split(',').nth(9).unwrap().is_empty(), "exact oracle missing: {row}");
    }
}

#[test]
fn failing_verdicts_exit_4_only_with_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("mosco.toml"))
        .unwrap()
        .replace("n_ladder = [64, 128, 256]", "n_ladder = [8, 16]");
    let cfg = dir.path().join("coarse.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    let (code, msg) = siplab(&["mosco-check", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 0, "{msg}");
    let (code, msg) = siplab(&["mosco-check", "--config", p(&cfg), "--out", p(&out), "--force", "--check"]);
    assert_eq!(code, 4, "{msg}");
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("fluct.toml"))
        .unwrap()
        .replace("horizon = 0.2\nsnapshot_times = [0.0, 0.1, 0.2]", "horizon = 0.0");
    let cfg = dir.path().join("flat.toml");
    std::fs::write(&cfg, text).unwrap();
    let (code, msg) = siplab(&["fluctuations", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(code, 3, "{msg}");
}
