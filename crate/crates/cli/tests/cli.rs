use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ssnal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssnal"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn report_schema() -> jsonschema::Validator {
    let text = include_str!("../schema/solve_report.schema.json");
    jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
}

fn assert_valid(report: &Value) {
    let v = report_schema();
    let errors: Vec<String> = v.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

/// Two overlapping blobs in LIBSVM format with 0/1 labels.
fn blobs(dir: &Path, name: &str, n: usize, shift: f64) -> PathBuf {
    let mut text = String::new();
    for i in 0..n {
        let label = i % 2;
        let t = i as f64 * 0.7;
        let c = if label == 1 { 1.0 } else { -1.0 };
        let x1 = c + 0.9 * t.sin() + shift;
        let x2 = 0.5 * c + 0.8 * (1.3 * t).cos();
        text.push_str(&format!("{label} 1:{x1} 2:{x2} 3:{}\n", (i % 5) as f64));
    }
    write(dir, name, &text)
}

/// min 1/2 |x|^2 - x1 - x2  s.t.  x1 + x2 = 1, 0 <= x <= 1.
fn tiny_qp(dir: &Path) -> Vec<String> {
    let q = write(dir, "q.csv", "1,0\n0,1\n");
    let c = write(dir, "c.csv", "-1,-1\n");
    let a = write(dir, "a.csv", "1,1\n");
    let l = write(dir, "l.csv", "0,0\n");
    let u = write(dir, "u.csv", "1,1\n");
    vec![
        "solve-qp".into(),
        "--data".into(),
        s(&q).into(),
        "--c".into(),
        s(&c).into(),
        "--a".into(),
        s(&a).into(),
        "--d".into(),
        "1".into(),
        "--l".into(),
        s(&l).into(),
        "--u".into(),
        s(&u).into(),
    ]
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn tiny_qp_solution() {
    let dir = TempDir::new().unwrap();
    for solver in ["ssnal", "apg"] {
        let mut a = tiny_qp(dir.path());
        a.extend(["--tol".into(), "1e-11".into(), "--solver".into(), solver.into()]);
        let r = stdout_json(&ssnal(&args(&a)));
        assert_valid(&r);
        assert_eq!(r["solver"], solver);
        assert_eq!(r["converged"], true);
        assert!(r["kkt_residual"].as_f64().unwrap() <= 1e-10);
        for x in r["x_opt"].as_array().unwrap() {
            assert!((x.as_f64().unwrap() - 0.5).abs() < 1e-9, "{x}");
        }
    }
}

#[test]
fn report_goes_to_out_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let mut a = tiny_qp(dir.path());
    a.extend(["--out".into(), s(&out).into()]);
    let o = ssnal(&args(&a));
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_valid(&r);
}

#[test]
fn usage_errors_exit_2_and_write_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let mut a = tiny_qp(dir.path());
    a.extend(["--out".into(), s(&out).into(), "--no-such-flag".into()]);
    let o = ssnal(&args(&a));
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    // malformed input file
    let bad = write(dir.path(), "bad.csv", "1,x\n0,1\n");
    let mut a = tiny_qp(dir.path());
    a[2] = s(&bad).into();
    a.extend(["--out".into(), s(&out).into()]);
    let o = ssnal(&args(&a));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[input]"));
    assert!(!out.exists());

    // dimension mismatch between Q and c
    let c3 = write(dir.path(), "c3.csv", "1,2,3\n");
    let mut a = tiny_qp(dir.path());
    a[4] = s(&c3).into();
    assert_eq!(ssnal(&args(&a)).status.code(), Some(2));

    // model parameters are validated
    let data = blobs(dir.path(), "train", 20, 0.0);
    let model = dir.path().join("m.json");
    let o = ssnal(&["train", "--data", s(&data), "--C", "-1", "--out", s(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!model.exists());
}

#[test]
fn unconverged_solve_exits_3_with_report() {
    let dir = TempDir::new().unwrap();
    // one projected-gradient step is exact when Q = I, so couple the coordinates
    let q = write(dir.path(), "coupled.csv", "2,1\n1,3\n");
    let skew = write(dir.path(), "skew.csv", "-1,-3\n");
    let mut a = tiny_qp(dir.path());
    a[2] = s(&q).into();
    a[4] = s(&skew).into();
    a.extend(["--solver".into(), "apg".into(), "--apg-max-iters".into(), "1".into(), "--tol".into(), "1e-12".into()]);
    let o = ssnal(&args(&a));
    assert_eq!(o.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid(&r);
    assert_eq!(r["converged"], false);
}

fn without_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time");
    if let Some(w) = v.get_mut("warm_start") {
        w.as_object_mut().unwrap().remove("seconds");
    }
    v
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), "train", 60, 0.0);
    let run = |k: usize| {
        let model = dir.path().join(format!("m{k}.json"));
        let o = ssnal(&[
            "train", "--data", s(&data), "--kernel", "rbf", "--alpha", "0.5", "--C", "2", "--approx",
            "nystrom:20", "--seed", "7", "--out", s(&model),
        ]);
        let r = stdout_json(&o);
        assert_valid(&r);
        (without_time(r), std::fs::read(&model).unwrap())
    };
    let (r1, m1) = run(1);
    let (r2, m2) = run(2);
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
}

#[test]
fn train_then_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let train = blobs(dir.path(), "train", 80, 0.0);
    let test = blobs(dir.path(), "test", 30, 0.05);
    let model = dir.path().join("m.json");
    let report = dir.path().join("r.json");
    let r = stdout_json(&ssnal(&[
        "train", "--data", s(&train), "--kernel", "rbf", "--C", "4", "--out", s(&model), "--report",
        s(&report), "--warm-start-rff", "64",
    ]));
    assert_eq!(r["converged"], true);
    assert_eq!(r["task"], "classification");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(without_time(saved), without_time(r.clone()));

    // predicting the training file reproduces the training accuracy
    let preds = dir.path().join("p.txt");
    let p = stdout_json(&ssnal(&["predict", "--model", s(&model), "--data", s(&train), "--out", s(&preds)]));
    assert_eq!(p["accuracy"], r["train_metrics"]["accuracy"]);
    assert!(p["accuracy"].as_f64().unwrap() > 0.8);
    let lines: Vec<String> = std::fs::read_to_string(&preds).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 80);
    assert!(lines.iter().all(|l| l == "0" || l == "1"), "{lines:?}");

    let p = stdout_json(&ssnal(&["predict", "--model", s(&model), "--data", s(&test)]));
    assert_eq!(p["n"], 30);
}

#[test]
fn regression_predictions_come_back_in_target_units() {
    let dir = TempDir::new().unwrap();
    let mut text = String::new();
    for i in 0..50 {
        let x = i as f64 / 10.0;
        text.push_str(&format!("{} 1:{x}\n", 100.0 + 20.0 * x));
    }
    let data = write(dir.path(), "lin", &text);
    let model = dir.path().join("m.json");
    stdout_json(&ssnal(&[
        "train", "--data", s(&data), "--task", "svr", "--C", "100", "--epsilon", "0.001", "--tol", "1e-6",
        "--out", s(&model),
    ]));
    let preds = dir.path().join("p.txt");
    let p = stdout_json(&ssnal(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&preds)]));
    assert!(p["mse_raw"].as_f64().unwrap() < 0.5, "{p}");
    let first: f64 = std::fs::read_to_string(&preds).unwrap().lines().next().unwrap().parse().unwrap();
    assert!((first - 100.0).abs() < 1.0, "{first}");
}

#[test]
fn cross_validation_grid() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), "train", 60, 0.0);
    let grid = write(
        dir.path(),
        "grid.json",
        r#"{"task": "classification", "kernel": "rbf", "C": [0.5, 8], "alpha": [1]}"#,
    );
    let table = dir.path().join("t.csv");
    let r = stdout_json(&ssnal(&["cv", "--data", s(&data), "--grid", s(&grid), "--folds", "3", "--table", s(&table)]));
    assert_eq!(r["table"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let bad = write(dir.path(), "bad.json", r#"{"task": "classification", "kernel": "rbf", "C": [1], "gamma": [1]}"#);
    let o = ssnal(&["cv", "--data", s(&data), "--grid", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_table_has_one_row_per_solver() {
    let dir = TempDir::new().unwrap();
    let data = blobs(dir.path(), "train", 60, 0.0);
    let o = ssnal(&["bench", "--data", s(&data), "--C", "1", "--json", "--repeat", "2"]);
    let rows = stdout_json(&o);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["solver"], "ssnal");
    assert_eq!(rows[1]["solver"], "apg");
    assert_eq!(rows[0]["runs"], 2);

    let o = ssnal(&["bench", "--data", s(&data), "--solvers", "ssnal"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("solver,"));
}
