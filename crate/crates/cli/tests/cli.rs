use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instrument-lab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

/// Records of a CSV table, header first, footer dropped.
fn csv_lines(text: &str) -> Vec<Vec<String>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.expect("valid csv").iter().map(String::from).collect())
        .collect()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("valid json")
}

#[test]
fn verify_passes_by_default() {
    let out = run(&["verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_lines(&stdout(&out));
    let suites: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(suites, ["instruments", "equivalence", "anchors", "windows"]);
    assert!(rows[1..].iter().all(|r| r[4] == "true"));
}

#[test]
fn unsatisfiable_tolerance_fails_verify() {
    let out = run(&["verify", "--tol", "1e-20"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn suite_filter_runs_one_suite() {
    let out = run(&["verify", "--suite", "instruments", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["suite"], "instruments");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    assert_eq!(code(&run(&["verify", "--suite", "nope"])), 2);
}

#[test]
fn single_observer_chain_is_rejected() {
    let out = run(&["theorem1", "--n", "1"]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
}

#[test]
fn two_step_chain_violates_twice() {
    let out = run(&["theorem1", "--n", "2", "--case", "I", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["s_simulated"].as_f64().unwrap() > 2.0);
        assert_eq!(r["valid"], true);
    }
    assert_eq!(v["meta"]["verdict"], "valid");
}

#[test]
fn long_chain_reports_construction_failure() {
    let out = run(&["theorem1", "--n", "8", "--case", "II"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("construction failed"));
}

#[test]
fn case_two_rejects_free_exponent() {
    assert_eq!(code(&run(&["theorem1", "--n", "3", "--case", "II", "--e", "5"])), 2);
}

#[test]
fn windows_match_reference() {
    let out = run(&["windows", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let rows = json(&out)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r["delta"].as_f64().unwrap() <= r["tol"].as_f64().unwrap());
    }
}

#[test]
fn windows_filter_by_mode_and_rule() {
    let out = run(&["windows", "--mode", "linear", "--rule", "maximal", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let rows = json(&out)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 1);
    assert!((rows[0]["lo"].as_f64().unwrap() - 0.427).abs() <= 2e-3);
}

#[test]
fn csv_and_json_agree() {
    let csv = stdout(&run(&["windows"]));
    let v = json(&run(&["windows", "--format", "json"]));
    let lines = csv_lines(&csv);
    let header = &lines[0];
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(lines.len() - 1, rows.len());
    for (line, row) in lines[1..].iter().zip(rows) {
        for (col, cell) in header.iter().zip(line) {
            match &row[col] {
                Value::Number(n) => {
                    let full = n.as_f64().unwrap();
                    let short: f64 = cell.parse().unwrap();
                    assert!((full - short).abs() <= 5e-6 * full.abs().max(1e-300), "{col}: {full} vs {short}");
                }
                Value::Bool(b) => assert_eq!(cell, &b.to_string()),
                Value::String(s) => assert_eq!(cell, s),
                other => panic!("unexpected {other}"),
            }
        }
    }
    assert!(csv.contains("# seed: 0") && v["meta"]["seed"] == 0);
}

#[test]
fn output_file_is_overwritten_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let p = path.to_str().unwrap();
    assert_eq!(code(&run(&["windows", "--out", p])), 0);
    assert_eq!(code(&run(&["windows", "--rule", "shifted", "--out", p])), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("mode,")).count(), 1);
    assert_eq!(csv_lines(&text).len(), 3);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1, "no temporary files left behind");
}

#[test]
fn unwritable_output_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("w.csv");
    assert_eq!(code(&run(&["windows", "--out", path.to_str().unwrap()])), 2);
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_file_supplies_values_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n": 1, "case": "I", "format": "json"}"#);
    assert_eq!(code(&run(&["--config", &cfg, "theorem1"])), 2);
    let out = run(&["--config", &cfg, "theorem1", "--n", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["--config", &write_config(dir.path(), r#"{"sead": 3}"#), "windows"])), 2);
    assert_eq!(code(&run(&["--config", &write_config(dir.path(), "{"), "windows"])), 2);
    assert_eq!(code(&run(&["--config", "/nonexistent/run.json", "windows"])), 2);
}

#[test]
fn table1_unilateral_weak_cell() {
    let args = ["table1", "--strategy", "weak", "--scenario", "uni", "--mode", "elliptical", "--starts", "20"];
    let out = run(&[&args[..], &["--format", "json"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let row = &v["rows"][0];
    assert!((row["t_star"].as_f64().unwrap() - 2.2627).abs() <= 1e-3);
    assert_eq!(row["accepted"], true);
    assert_eq!(row["starts"], 20);
    assert_eq!(v["meta"]["starts"], 20);
    let again = json(&run(&[&args[..], &["--format", "json"]].concat()));
    assert_eq!(again["rows"], v["rows"], "same seed, same rows");
}

#[test]
fn table1_rejects_free_strategy() {
    assert_eq!(code(&run(&["table1", "--strategy", "free"])), 2);
}

#[test]
fn pareto_rejects_range_outside_bounds() {
    assert_eq!(code(&run(&["pareto", "--range", "1.5", "2.2", "--starts", "1", "--no-anchor"])), 2);
    assert_eq!(code(&run(&["pareto", "--targets", "0"])), 2);
}

#[test]
fn pareto_rows_ascend() {
    let args = ["pareto", "--mode", "linear", "--targets", "3", "--range", "2.0", "2.002", "--starts", "2", "--no-anchor"];
    let out = run(&[&args[..], &["--format", "json"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let targets: Vec<f64> = rows.iter().map(|r| r["s1_target"].as_f64().unwrap()).collect();
    assert!(targets.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(rows[0].as_object().unwrap().len(), 4 + 25);
    assert!(v["meta"].get("anchor_t_star").is_none());
}
