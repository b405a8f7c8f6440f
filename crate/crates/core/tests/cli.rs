//! End-to-end checks of the `qballot` binary: exit codes, output files and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn qballot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qballot")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qballot-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

#[test]
fn honest_run_exits_zero() {
    let out = qballot(&["run", &scenario("distributed.scn")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("tally"));
}

#[test]
fn verify_exits_zero_on_a_good_scenario() {
    let out = qballot(&["verify", &scenario("dolev.scn")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_dimension_exits_one() {
    let out = qballot(&["run", &scenario("bad_dim.scn")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_key_exits_one() {
    let path = scratch("unknown.scn", "[protocol]\nscheme = traveling\ndim = 4\nvoters = 2\nvotes = 1, 0\ncolour = blue\n");
    let out = qballot(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_file_exits_one() {
    let out = qballot(&["run", "/nonexistent/qballot.scn"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oversized_sweep_exits_three() {
    let votes = vec!["1"; 25].join(", ");
    let path = scratch("huge.scn", &format!("[protocol]\nscheme = traveling\ndim = 30\nvoters = 25\nvotes = {votes}\n"));
    let out = qballot(&["sweep", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_flag_writes_the_report() {
    let target = std::env::temp_dir().join(format!("qballot-cli-out-{}.jsonl", std::process::id()));
    let out = qballot(&["run", &scenario("distributed.scn"), "--format", "json-lines", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let written = std::fs::read_to_string(&target).unwrap();
    std::fs::remove_file(&target).ok();
    let summary = qballot::runner::parse_summary(&written).unwrap();
    assert_eq!(summary.trials, 10);
    assert_eq!(summary.tally, Some(2));
}

#[test]
fn json_lines_are_deterministic_and_seed_sensitive() {
    let run = |seed: &str| {
        let out = qballot(&["run", &scenario("distributed.scn"), "--format", "json-lines", "--seed", seed]);
        assert_eq!(out.status.code(), Some(0));
        out.stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn attack_trial_override_is_honoured() {
    let out = qballot(&["attack", &scenario("swap_attack.scn"), "--trials", "2000", "--format", "json-lines"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = qballot::runner::parse_summary(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(summary.trials, 2000);
    assert!(summary.detection_frequency.is_some());
}
