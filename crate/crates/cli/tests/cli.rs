use std::path::Path;
use std::process::Command;

use imela_cli::trace_csv::read_trace;

fn imela(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_imela")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = imela(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn counterexample_run_ends_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "ce.csv");
    ok(&["run", "--problem", "counterexample", "--method", "imela", "--out", &out]);
    let t = read_trace(Path::new(&out)).unwrap();
    assert!(t.rows.last().unwrap().stat.unwrap() <= 1e-3);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ce.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "imela-summary v1");
    assert!(summary["a_priori"]["m_lambda"].as_f64().unwrap() > 0.0);
    assert!(summary["a_priori"]["inner_smoothness"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["outer_iterations"], 1000);
}

#[test]
fn ssg_leaves_multiplier_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "ssg.csv");
    ok(&["run", "--method", "ssg", "--budget", "30", "--out", &out]);
    let t = read_trace(Path::new(&out)).unwrap();
    assert!(t.rows.iter().all(|r| r.stat.is_none() && r.comp_slack.is_none()));
    assert!(t.rows[1..].iter().all(|r| r.branch.is_some()));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    for out in [&a, &b] {
        ok(&["run", "--problem", "disk", "--method", "ippp", "--params", "rho=50", "--budget", "steps:300", "--out", out]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(dir.path().join("a.json")).unwrap(), std::fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn single_point_tuning_returns_it() {
    let dir = tempfile::tempdir().unwrap();
    let (out, fin) = (p(dir.path(), "best.json"), p(dir.path(), "final.csv"));
    ok(&[
        "tune", "--problem", "halfplane", "--method", "splm", "--grid", "eta=0.05", "--grid", "tau=1", "--grid", "theta=0.5",
        "--budget", "100", "--out", &out, "--final-trace", &fin,
    ]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["best_params"]["eta"], 0.05);
    assert_eq!(v["candidates"]["candidates"].as_array().unwrap().len(), 1);
    assert_eq!(read_trace(Path::new(&fin)).unwrap().rows.len(), 401);
}

#[test]
fn report_merges_and_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, m) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"), p(dir.path(), "m.csv"));
    ok(&["run", "--method", "imela", "--budget", "20", "--out", &a]);
    ok(&["run", "--method", "splm", "--budget", "20", "--out", &b]);
    ok(&["report", &a, &b, "--out", &m]);
    let merged = std::fs::read_to_string(&m).unwrap();
    assert!(merged.starts_with("# imela-report v1\ncum_oracle,imela_obj"));

    let bad = p(dir.path(), "bad.csv");
    std::fs::write(&bad, std::fs::read_to_string(&a).unwrap().replace("v1", "v9")).unwrap();
    let out = imela(&["report", &a, &bad]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains("v9"), "{err}");

    let empty = p(dir.path(), "empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(!imela(&["report", &empty]).status.success());
}

#[test]
fn config_errors_exit_nonzero() {
    for args in [
        vec!["run", "--problem", "nope"],
        vec!["run", "--method", "imela", "--params", "rho=3"],
        vec!["run", "--problem", "fairness"],
        vec!["tune", "--grid", "tau="],
    ] {
        let out = imela(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
}

#[test]
fn fairness_csv_problem_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let mut text = String::from("x1,x2,grp,label\n");
    for i in 0..60 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.91).cos();
        let g = i % 3 == 0;
        let y = a + 0.5 * b + if g { 0.3 } else { 0.0 } + 0.4 * (i as f64 * 1.7).sin() > 0.0;
        text += &format!("{a},{b},{},{}\n", g as u8, if y { 1 } else { -1 });
    }
    std::fs::write(&data, text).unwrap();
    let out = p(dir.path(), "f.csv");
    ok(&["run", "--problem", "fairness", "--data", &data, "--group", "grp", "--radius", "10", "--budget", "20", "--out", &out]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("f.json")).unwrap()).unwrap();
    let f = &v["fairness"];
    assert_eq!(f["kappa"].as_f64().unwrap(), 1e-3 * f["lstar"].as_f64().unwrap());
    assert_eq!(f["diameter"], 20.0);
}
