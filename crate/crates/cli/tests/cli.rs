use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect()
}

fn mininfo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mininfo")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
    p
}

fn synthesize_example1(dir: &Path) -> PathBuf {
    let policy = dir.join("policy.json");
    let out = mininfo(&["synthesize", "--mdp", path(&data("example1.json")), "--out", path(&policy)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    policy
}

#[test]
fn synthesize_prints_a_policy_file() {
    let out = mininfo(&["synthesize", "--mdp", path(&data("example1.json"))]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("status=optimal"), "{stderr}");
}

#[test]
fn validate_accepts_the_data_files() {
    for name in ["example1.json", "fig2.json", "fig4a.json", "fig5a.json", "fig5b.json"] {
        let out = mininfo(&["validate", "--mdp", path(&data(name))]);
        assert_eq!(code(&out), 0, "{name}");
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["valid"], Value::Bool(true), "{name}");
    }
}

#[test]
fn malformed_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"states\": [").unwrap();
    assert_eq!(code(&mininfo(&["synthesize", "--mdp", path(&bad)])), 2);
    assert_eq!(code(&mininfo(&["validate", "--mdp", path(&bad)])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&mininfo(&["analyze", "--mdp", path(&missing)])), 2);
}

#[test]
fn invalid_distribution_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data("example1.json")).unwrap()).unwrap();
    v["transitions"][0]["to"]["s1"] = Value::from(0.5);
    let p = write_json(dir.path(), "m.json", &v);
    let out = mininfo(&["validate", "--mdp", path(&p)]);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["valid"], Value::Bool(false));
    assert_eq!(code(&mininfo(&["synthesize", "--mdp", path(&p)])), 2);
}

#[test]
fn unreachable_threshold_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(data("example1.json")).unwrap()).unwrap();
    // s2 is reached with probability at most 1/2
    let row = v["transitions"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|t| t["from"] == "s1" && t["action"] == "alpha")
        .unwrap();
    row["to"] = serde_json::json!({ "s2": 0.5, "s3": 0.5 });
    v["reach"] = serde_json::json!({ "targets": ["s2"], "threshold": 0.9 });
    let p = write_json(dir.path(), "m.json", &v);
    for mode in ["closed", "exhaustive", "switch"] {
        let out = mininfo(&["synthesize", "--mdp", path(&p), "--mode", mode]);
        assert_eq!(code(&out), 3, "{mode}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("0.5"));
    }
}

#[test]
fn closed_mode_rejects_unobserved_end_components() {
    let out = mininfo(&["synthesize", "--mdp", path(&data("fig5a.json")), "--mode", "closed"]);
    assert_eq!(code(&out), 2);
    let out = mininfo(&["synthesize", "--mdp", path(&data("fig5a.json")), "--mode", "switch"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn zero_paths_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let policy = synthesize_example1(dir.path());
    let out = mininfo(&[
        "simulate",
        "--mdp",
        path(&data("example1.json")),
        "--policy",
        path(&policy),
        "--paths",
        "0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let policy = synthesize_example1(dir.path());
    let run = |seed: &str| {
        let out = mininfo(&[
            "simulate",
            "--mdp",
            path(&data("example1.json")),
            "--policy",
            path(&policy),
            "--paths",
            "500",
            "--seed",
            seed,
        ]);
        assert_eq!(code(&out), 0);
        out.stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn simulation_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let policy = synthesize_example1(dir.path());
    let csv = dir.path().join("mse.csv");
    let out = mininfo(&[
        "simulate",
        "--mdp",
        path(&data("example1.json")),
        "--policy",
        path(&policy),
        "--paths",
        "200",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("state,count,mse,bound"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn bounds_of_a_synthesized_policy() {
    let dir = tempfile::tempdir().unwrap();
    let policy = synthesize_example1(dir.path());
    let out = mininfo(&["bounds", "--mdp", path(&data("example1.json")), "--policy", path(&policy)]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum = v["sum"].as_f64().unwrap();
    let corollary = v["corollary"].as_f64().unwrap();
    assert!(corollary <= sum);
}

#[test]
fn grid_with_synthesis_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "width": 4, "height": 3, "initial": [0, 0], "goal": [3, 2], "slip": 0.1,
        "unobserved_tiles": [[1, 0], [1, 1], [1, 2]], "threshold": 0.9
    });
    let spec = write_json(dir.path(), "spec.json", &spec);
    let mdp = dir.path().join("grid.json");
    let policy = dir.path().join("policy.json");
    let heat = dir.path().join("heat.csv");
    let out = mininfo(&[
        "grid",
        "--spec",
        path(&spec),
        "--out",
        path(&mdp),
        "--synthesize",
        "--policy-out",
        path(&policy),
        "--heatmap",
        path(&heat),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&mininfo(&["validate", "--mdp", path(&mdp)])), 0);
    let text = std::fs::read_to_string(&heat).unwrap();
    assert_eq!(text.lines().next(), Some("col,row,value"));
    assert_eq!(text.lines().count(), 1 + 12);
    let out = mininfo(&["bounds", "--mdp", path(&mdp), "--policy", path(&policy)]);
    assert_eq!(code(&out), 0);
}

#[test]
fn grid_goal_on_blocked_tile_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "width": 3, "height": 3, "initial": [0, 0], "goal": [2, 2],
        "blocked_tiles": [[2, 2]], "threshold": 0.5
    });
    let spec = write_json(dir.path(), "spec.json", &spec);
    let out = mininfo(&["grid", "--spec", path(&spec)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn analyze_lists_end_components() {
    let out = mininfo(&["analyze", "--mdp", path(&data("fig5a.json"))]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}
