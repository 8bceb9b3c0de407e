use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn bayesdoe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesdoe"))
        .args(args)
        .current_dir(dir)
        .env_remove("BAYESDOE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn batchobj(dir: &Path, seed: &str) {
    let space = data("BatchObj.space.json");
    let csv = data("BatchObj.csv");
    ok(&bayesdoe(
        dir,
        &["init", "--space", space.to_str().unwrap(), "--data", csv.to_str().unwrap(), "--out", "c.json", "--seed", seed],
    ));
}

#[test]
fn ask_prints_two_rows_of_four_columns() {
    let dir = tempfile::tempdir().unwrap();
    batchobj(dir.path(), "1");
    let text = ok(&bayesdoe(dir.path(), &["ask", "--campaign", "c.json", "-q", "2", "--strategy", "qei"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "Saturation,Layer_thickness,Roll_speed,Feed_powder_ratio");
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 4);
    }
    let status = ok(&bayesdoe(dir.path(), &["status", "--campaign", "c.json"]));
    assert!(status.contains("revision: 2"));
    assert!(status.contains("pending: 2"));
    assert!(status.contains("observations: 27"));
}

#[test]
fn verbs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let script: &[&[&str]] = &[
        &["ask", "--campaign", "c.json", "-q", "2", "--strategy", "qei", "--seed", "5"],
        &["ask", "--campaign", "c.json", "-q", "2", "--strategy", "local-penalization"],
        &["--json", "ask", "--campaign", "c.json", "-q", "1", "--dry-run"],
        &["status", "--campaign", "c.json"],
        &["recommend", "--campaign", "c.json"],
        &["pareto", "--campaign", "c.json"],
        &["simulate", "--campaign", "c.json", "--iters", "2", "-q", "2", "--seed", "3"],
        &["export-trace", "--campaign", "c.json"],
        &["--json", "status", "--campaign", "c.json"],
    ];
    batchobj(a.path(), "4");
    batchobj(b.path(), "4");
    for args in script {
        let x = ok(&bayesdoe(a.path(), args));
        let y = ok(&bayesdoe(b.path(), args));
        assert_eq!(x, y, "{args:?}");
    }
    let fa = std::fs::read_to_string(a.path().join("c.json")).unwrap();
    let fb = std::fs::read_to_string(b.path().join("c.json")).unwrap();
    let strip = |s: &str| s.lines().filter(|l| !l.contains("timestamp_ms")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&fa), strip(&fb));
}

#[test]
fn dry_run_leaves_the_campaign_alone() {
    let dir = tempfile::tempdir().unwrap();
    batchobj(dir.path(), "2");
    let before = std::fs::read(dir.path().join("c.json")).unwrap();
    let x = ok(&bayesdoe(dir.path(), &["ask", "--campaign", "c.json", "-q", "2", "--dry-run"]));
    let y = ok(&bayesdoe(dir.path(), &["ask", "--campaign", "c.json", "-q", "2", "--dry-run"]));
    assert_eq!(x, y);
    assert_eq!(std::fs::read(dir.path().join("c.json")).unwrap(), before);
}

#[test]
fn out_of_bounds_tell_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    batchobj(dir.path(), "1");
    std::fs::write(
        dir.path().join("new.csv"),
        "Saturation,Layer_thickness,Roll_speed,Feed_powder_ratio,y\n50,90,8,2,600\n50,300,8,2,610\n",
    )
    .unwrap();
    let out = bayesdoe(dir.path(), &["tell", "--campaign", "c.json", "--data", "new.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2"), "{msg}");
    assert!(msg.contains("Layer_thickness"), "{msg}");
    let clamped = ok(&bayesdoe(dir.path(), &["tell", "--campaign", "c.json", "--data", "new.csv", "--clamp"]));
    assert!(clamped.contains("added 2 rows"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bayesdoe(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(bayesdoe(dir.path(), &["ask", "--nope"]).status.code(), Some(2));
    assert_eq!(bayesdoe(dir.path(), &["status", "--campaign", "missing.json"]).status.code(), Some(2));
    assert_eq!(bayesdoe(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_trace_best_so_far_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    batchobj(dir.path(), "9");
    ok(&bayesdoe(
        dir.path(),
        &["simulate", "--campaign", "c.json", "--oracle", "quadratic", "--iters", "4", "-q", "2", "--trace", "t.csv"],
    ));
    let exported = ok(&bayesdoe(dir.path(), &["export-trace", "--campaign", "c.json"]));
    assert_eq!(exported, std::fs::read_to_string(dir.path().join("t.csv")).unwrap());
    let mut lines = exported.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.last(), Some(&"best_so_far"));
    let best: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(best.len(), 8);
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
    // the measured campaign keeps only the trace, not the oracle's rows
    let status = ok(&bayesdoe(dir.path(), &["status", "--campaign", "c.json"]));
    assert!(status.contains("observations: 27"));
}

#[test]
fn campaign_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let space = data("BatchObj.space.json");
    let out = Command::new(env!("CARGO_BIN_EXE_bayesdoe"))
        .args(["init", "--space", space.to_str().unwrap(), "--out", "env.json"])
        .current_dir(elsewhere.path())
        .env("BAYESDOE_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("env.json").exists());
    assert!(!elsewhere.path().join("env.json").exists());
}

#[test]
fn minimize_flag_and_constraints_at_init() {
    let dir = tempfile::tempdir().unwrap();
    let space = data("BBcon.space.json");
    let csv = data("BBcon.csv");
    let json = ok(&bayesdoe(
        dir.path(),
        &[
            "--json", "init", "--space", space.to_str().unwrap(), "--data", csv.to_str().unwrap(), "--out", "b.json",
            "--constraint", "Austenite_finish:le:5",
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["observations"], 17);
    let text = std::fs::read_to_string(dir.path().join("b.json")).unwrap();
    assert!(text.contains("\"threshold\": 5.0"));
    let rec = ok(&bayesdoe(dir.path(), &["--json", "recommend", "--campaign", "b.json"]));
    let v: serde_json::Value = serde_json::from_str(&rec).unwrap();
    assert_eq!(v["kind"], "single");

    let dir2 = tempfile::tempdir().unwrap();
    let bo = data("BatchObj.space.json");
    ok(&bayesdoe(dir2.path(), &["init", "--space", bo.to_str().unwrap(), "--out", "m.json", "--minimize", "y"]));
    let text = std::fs::read_to_string(dir2.path().join("m.json")).unwrap();
    assert!(text.contains("\"sense\": \"minimize\""));
}

#[test]
fn multi_objective_recommend_is_the_pareto_set() {
    let dir = tempfile::tempdir().unwrap();
    let space = data("MultiObj.space.json");
    let csv = data("MultiObj.csv");
    ok(&bayesdoe(dir.path(), &["init", "--space", space.to_str().unwrap(), "--data", csv.to_str().unwrap(), "--out", "m.json"]));
    let pareto = ok(&bayesdoe(dir.path(), &["pareto", "--campaign", "m.json"]));
    let rec = ok(&bayesdoe(dir.path(), &["recommend", "--campaign", "m.json"]));
    assert_eq!(pareto, rec);
    assert!(pareto.lines().count() >= 2);
    let asked = ok(&bayesdoe(dir.path(), &["ask", "--campaign", "m.json", "-q", "2"]));
    assert_eq!(asked.lines().count(), 3);
}
