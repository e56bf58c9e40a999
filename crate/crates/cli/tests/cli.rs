use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn bbpc(args: &[&str]) -> Output {
    bbpc_env(args, &[])
}

fn bbpc_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bbpc"));
    c.args(args).env_remove("BBPC_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(o)).unwrap()
}

fn close(v: &Value, want: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() <= tol
}

#[test]
fn model_info_lists_discriminant_and_equilibria() {
    let o = bbpc(&["model-info"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("D = 0.654791"), "{s}");
    assert!(s.contains("x- (u2 = 0.0666300): (-0.566151, 0.0753767)"), "{s}");

    let v = json(&bbpc(&["model-info", "--format", "json"]));
    let hot = v["equilibria_u2_max"].as_array().unwrap();
    assert!(hot.iter().any(|x| close(&x[0], -0.566139, 1e-4) && close(&x[1], 0.075376, 1e-4)));
    assert_eq!(v["switching_bound_applies"], Value::Bool(true));
}

#[test]
fn model_sources() {
    assert_eq!(bbpc(&["model-info", "--model", "/definitely/not/here.cfg"]).status.code(), Some(2));
    assert_eq!(bbpc(&["model-info", "--model", "nonsense-preset"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.cfg");
    fs::write(&path, "preset = hydrolysis\nu2_max = 0.05 # narrower\n").unwrap();
    let v = json(&bbpc(&["model-info", "--format", "json", "--model", path.to_str().unwrap()]));
    assert_eq!(v["bounds"]["u2_max"], 0.05);

    fs::write(&path, "preset = hydrolysis\ncolour = blue\n").unwrap();
    assert_eq!(bbpc(&["model-info", "--model", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn design_reports_costs() {
    let v = json(&bbpc(&["design", "--N", "2", "--tau", "1", "--format", "json"]));
    assert!(close(&v["J"], -0.03385, 1e-3), "{v}");
    assert_eq!(v["kind"], "J2_est");
    assert!(v["closure_residual"].as_f64().unwrap() <= 1e-10);
    assert!(close(&v["leading_coefficient"], -0.0353335, 1e-6));

    let v = json(&bbpc(&["design", "--N", "4", "--tau", "1", "--alpha2", "0.1", "--alpha4", "0.1", "--format", "json"]));
    assert!(close(&v["J"], -0.02497, 1e-3), "{v}");

    let v = json(&bbpc(&["design", "--N", "3", "--tau", "1", "--alpha2", "0.4", "--format", "json"]));
    assert!(close(&v["J"], -0.482341, 1e-3), "{v}");
    assert_eq!(v["kind"], "average");

    let s = stdout(&bbpc(&["design", "--tau", "0.5"]));
    assert!(s.lines().any(|l| l.starts_with("J = -0.00867")), "{s}");
}

#[test]
fn design_input_errors() {
    assert_eq!(bbpc(&["design", "--N", "4", "--tau", "1"]).status.code(), Some(2));
    assert_eq!(bbpc(&["design", "--N", "5", "--tau", "1"]).status.code(), Some(2));
    assert_eq!(bbpc(&["design", "--N", "3", "--tau", "1", "--alpha2", "0.7"]).status.code(), Some(2));
    assert_eq!(bbpc(&["design", "--tau", "-1"]).status.code(), Some(2));
    assert_eq!(bbpc(&["design", "--tau", "1", "--guess", "0,-5"]).status.code(), Some(2));
    assert_eq!(bbpc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_code() {
    let o = bbpc(&["design", "--tau", "1", "--guess", "1e5,1e5"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}

#[test]
fn csv_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = bbpc(&["design", "--tau", "0.3", "--csv", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = bbpc(&["trajectory", "--tau", "0.3", "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);
    let mut lines = ta.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u1,u2"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let last: Vec<f64> = ta.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert_eq!(last[0], 0.3);
    assert!((first[1] - last[1]).abs() <= 1e-9 && (first[2] - last[2]).abs() <= 1e-9);
}

#[test]
fn stamp_goes_to_stderr_only() {
    let plain = bbpc(&["design", "--tau", "0.2", "--format", "json"]);
    let stamped = bbpc(&["design", "--tau", "0.2", "--format", "json", "--stamp"]);
    assert_eq!(plain.stdout, stamped.stdout);
    let meta: Value = serde_json::from_slice(&stamped.stderr).unwrap();
    assert_eq!(meta["tool"], "bbpc");
}

#[test]
fn table_has_ten_rows_and_flags_the_outlier() {
    let o = bbpc(&["table1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().skip(1).take_while(|l| !l.starts_with("note")).collect();
    assert_eq!(rows.len(), 10, "{s}");
    assert!(rows[3].contains("anomalous"));
    assert!(s.contains("note: published J_est"));

    let v = json(&bbpc(&["table1", "--format", "json"]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 10);
    let r8 = &rows[7];
    assert!(close(&r8["tau"], 0.8, 1e-12));
    assert!(close(&r8["x0"][0], -0.35420, 1e-3) && close(&r8["x0"][1], -0.01315, 1e-3));
    assert!(close(&r8["J"], -0.02172, 2e-4));
    assert!(close(&rows[0]["J"], -0.00040, 2e-4));
    assert_eq!(rows.iter().filter(|r| r["anomalous_j_est"] == Value::Bool(true)).count(), 1);
}

#[test]
fn period_sweeps() {
    let o = bbpc(&["sweep", "--tau", ""]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "[]");

    let v = json(&bbpc(&["sweep", "--N", "2", "--tau", "0.5,1,2"]));
    let items = v.as_array().unwrap();
    assert_eq!(items.len(), 3);
    assert!(items.iter().all(|i| i["status"] == "ok"));
    let taus: Vec<f64> = items.iter().map(|i| i["tau"].as_f64().unwrap()).collect();
    assert_eq!(taus, vec![0.5, 1.0, 2.0]);
    assert!(close(&items[2]["J"], -0.10898, 1e-3));

    assert_eq!(bbpc(&["sweep", "--tau", "1,abc"]).status.code(), Some(2));
    assert_eq!(bbpc(&["sweep", "--tau", "0"]).status.code(), Some(2));
}

#[test]
fn alpha_grid_is_thread_count_independent() {
    let one = bbpc_env(&["sweep", "--N", "4", "--tau", "1", "--alpha-grid", "3"], &[("BBPC_THREADS", "1")]);
    let three = bbpc_env(&["sweep", "--N", "4", "--tau", "1", "--alpha-grid", "3"], &[("BBPC_THREADS", "3")]);
    assert_eq!(one.stdout, three.stdout);
    let v = json(&one);
    let items = v.as_array().unwrap();
    assert_eq!(items.len(), 9);
    let a: Vec<(f64, f64)> = items.iter().map(|i| (i["alphas"][0].as_f64().unwrap(), i["alphas"][2].as_f64().unwrap())).collect();
    assert_eq!(a[0], (0.125, 0.125));
    assert_eq!(a[1], (0.125, 0.25));
    assert_eq!(a[3], (0.25, 0.125));
    for i in items {
        assert_eq!(i["status"], "ok");
        assert!(i["cstar"].is_f64() && i["cbar_exceeds_cstar"].is_boolean());
    }

    let empty = bbpc(&["sweep", "--N", "4", "--tau", "1", "--alpha-grid", "0"]);
    assert_eq!(stdout(&empty).trim(), "[]");
    assert_eq!(bbpc(&["sweep", "--N", "2", "--tau", "1", "--alpha-grid", "3"]).status.code(), Some(2));
    assert_eq!(bbpc(&["sweep", "--N", "4", "--tau", "1,2", "--alpha-grid", "3"]).status.code(), Some(2));
    assert_eq!(bbpc_env(&["table1"], &[("BBPC_THREADS", "zero")]).status.code(), Some(2));
}
