use std::process::{Command, Output};

fn fde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fde"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn solve_json_reports_errors() {
    let out = fde(&["solve", "--beta", "0.5", "--n", "63", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 63);
    assert_eq!(v["converged"], true);
    let e = v["e_inf"].as_f64().unwrap();
    assert!(e > 0.0 && e < 1e-2);
}

#[test]
fn solve_csv_dump_has_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let out = fde(&[
        "solve", "--beta", "0.3", "--mesh", "composite", "--rule", "log2", "--n", "31", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,u,exact"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 31);
    let first: Vec<&str> = rows[0].split(',').collect();
    // 17 significant digits: d.dddddddddddddddde-XX
    assert_eq!(first[1].split('e').next().unwrap().len(), 18);
}

#[test]
fn configuration_errors_exit_with_one() {
    assert_eq!(fde(&["solve", "--beta", "1.5"]).status.code(), Some(1));
    assert_eq!(fde(&["solve", "--beta", "0.5", "--tol", "0"]).status.code(), Some(1));
    assert_eq!(fde(&["table", "--id", "9"]).status.code(), Some(1));
    assert_eq!(fde(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_with_two() {
    let out = fde(&["solve", "--beta", "0.5", "--n", "127", "--maxit", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("It = -"));
}

#[test]
fn truncated_table_rows() {
    let out = fde(&["table", "--id", "2", "--max-exponent", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("table,beta,gamma,mesh,N"));
    // 18 columns with N + 1 in {16, 32}
    assert_eq!(lines.count(), 36);
}

#[test]
fn symbol_samples_vanish_only_at_zero() {
    let out = fde(&["symbol", "--beta", "0.4", "--points", "9", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Vec<(f64, f64)> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.len(), 9);
    assert!(v[0].1.abs() < 1e-5);
    assert!(v[1..].iter().all(|&(_, p)| p > 0.0));
}
