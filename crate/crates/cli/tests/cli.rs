use std::path::Path;
use std::process::{Command, Output};

use cwmv::aggregation::{Decision, Response};
use cwmv::io::write_json;
use cwmv::scenario::default_scenario_spec;

fn cwmv_cmd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwmv")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cwmv_cmd(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    cwmv_cmd(dir, args).status.code().expect("exit code")
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn default_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["scenarios"]);
    assert!(stdout.contains("scenario IV"));
    let out = dir.path().join("out");
    assert!(out.join("scenarios.json").exists());
    assert!(out.join("scenarios.manifest.json").exists());
    // header plus three members and the group for each of four scenarios
    assert_eq!(lines(&out.join("scenarios_check.csv")), 1 + 4 * 4);
}

#[test]
fn custom_and_unattainable_specs() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = default_scenario_spec();
    spec.scenarios.truncate(1);
    write_json(&dir.path().join("one.json"), &spec).unwrap();
    ok(dir.path(), &["scenarios", "--spec", "one.json"]);
    assert_eq!(lines(&dir.path().join("out/scenarios_check.csv")), 5);

    spec.scenarios[0].targets.members[0] = Response::new(Decision::Positive, 0.999).unwrap();
    write_json(&dir.path().join("bad.json"), &spec).unwrap();
    let out = cwmv_cmd(dir.path(), &["scenarios", "--spec", "bad.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn simulate_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "11", "simulate"]);
    let data = dir.path().join("out/dataset.csv");
    // header plus 84 trials of three members and one group row
    assert_eq!(lines(&data), 1 + 84 * 4);
    assert!(dir.path().join("out/dataset.json").exists());

    ok(dir.path(), &["--out", "again", "replay", "--manifest", "out/simulate.manifest.json"]);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(dir.path().join("again/dataset.csv")).unwrap());
}

#[test]
fn seeds_control_output() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "3", "--out", "a", "simulate", "--n-groups", "2"]);
    ok(dir.path(), &["--seed", "3", "--out", "b", "simulate", "--n-groups", "2"]);
    ok(dir.path(), &["--seed", "4", "--out", "c", "simulate", "--n-groups", "2"]);
    let read = |d: &str| std::fs::read(dir.path().join(d).join("dataset.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn invalid_arguments_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &["simulate", "--n-groups", "0"]), 2);
    assert_eq!(code(dir.path(), &["--dataset", "missing.csv", "fit"]), 2);
    assert_eq!(code(dir.path(), &["simulate", "--sigma-g", "-1"]), 2);
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n-groups", "2"]);
    ok(dir.path(), &["--dataset", "out/dataset.csv", "--out", "fit", "fit"]);
    let csv = dir.path().join("out/dataset.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push('\n');
    std::fs::write(&csv, text).unwrap();
    assert_eq!(code(dir.path(), &["--out", "r", "replay", "--manifest", "fit/fit.manifest.json"]), 1);
}

#[test]
fn fit_reports_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n-groups", "3"]);
    let stdout = ok(dir.path(), &["--dataset", "out/dataset.csv", "fit"]);
    assert!(stdout.contains("manifest:"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/fit.json")).unwrap()).unwrap();
    let variants: Vec<&str> =
        report["variants"].as_array().unwrap().iter().map(|v| v["variant"].as_str().unwrap()).collect();
    assert_eq!(variants, ["full", "gamma_fixed_1", "beta_fixed_0", "beta_fixed_1"]);
    assert_eq!(report["meta"]["command"], "fit");
}

#[test]
fn analyze_noise_free_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n-groups", "3", "--sigma-i", "0", "--beta", "1", "--gamma", "1", "--sigma-g", "0"]);
    ok(dir.path(), &["--dataset", "out/dataset.csv", "analyze"]);
    for f in ["analysis.json", "groups.csv", "points.csv", "levels.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    // one header plus one row per group
    assert_eq!(lines(&dir.path().join("out/groups.csv")), 4);
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("empty.csv"),
        "group_id,trial,scenario_id,member,decision,confidence,ideal_decision,ideal_confidence,truth\n",
    )
    .unwrap();
    assert_eq!(code(dir.path(), &["--dataset", "empty.csv", "analyze"]), 2);
}

#[test]
fn randomize_single_permutation() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n-groups", "2"]);
    ok(dir.path(), &["--dataset", "out/dataset.csv", "randomize", "--n-perm", "1"]);
    assert_eq!(lines(&dir.path().join("out/randomization.csv")), 2);
    assert_eq!(code(dir.path(), &["--dataset", "out/dataset.csv", "randomize", "--n-perm", "0"]), 2);
}
