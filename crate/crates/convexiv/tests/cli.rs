use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_convexiv");
const WAGES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wage_synthetic.csv");

fn convexiv(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = convexiv(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

// y on x with intercept; z instruments x.
const TOY: &str = "y,x,z\n2,1,1\n3,2,0\n5,3,1\n4,4,1\n6,5,0\n8,6,1\n";

fn wage_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "--input", WAGES, "--response", "lwage", "--endogenous", "educ", "--exogenous", "exper",
        "--instruments", "distcol,q2,q3,q4", "--intercept",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn toy_ols_matches_hand_computed_regression() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "toy.csv", TOY);
    let out = ok(&[
        "estimate", "--input", input.to_str().unwrap(), "--response", "y", "--endogenous", "x",
        "--instruments", "z", "--intercept", "--estimators", "ols", "--format", "json",
    ]);
    let doc: Value = serde_json::from_str(&out).unwrap();
    let r = &doc["results"][0];
    assert_eq!(r["terms"], serde_json::json!(["x", "(intercept)"]));

    // slope = Sxy / Sxx = 19 / 17.5, intercept = ybar - slope * xbar
    let x: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y: [f64; 6] = [2.0, 3.0, 5.0, 4.0, 6.0, 8.0];
    let slope = 19.0 / 17.5;
    let icpt = 28.0 / 6.0 - slope * 3.5;
    let rss: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - icpt - slope * xi).powi(2)).sum();
    let s2 = rss / 4.0;
    let se_slope = (s2 / 17.5).sqrt();
    let se_icpt = (s2 * (1.0 / 6.0 + 3.5 * 3.5 / 17.5)).sqrt();

    let coef = |j: usize| r["coefficients"][j].as_f64().unwrap();
    let se = |j: usize| r["std_errors"][j].as_f64().unwrap();
    assert!((coef(0) - slope).abs() < 1e-12);
    assert!((coef(1) - icpt).abs() < 1e-12);
    assert!((se(0) - se_slope).abs() < 1e-12);
    assert!((se(1) - se_icpt).abs() < 1e-12);
    assert_eq!(r["se_method"], "analytic");
    assert_eq!(doc["data"]["n"], 6);
    assert_eq!(doc["run"]["seed"], 1);
}

#[test]
fn estimate_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let args = wage_args(&[
            "--estimators", "ols,tsls,jive,cls-tsls", "--bootstrap-reps", "30", "--seed", "11", "--output",
            path.to_str().unwrap(),
        ]);
        let mut full = vec!["estimate".to_string()];
        full.extend(args);
        ok(&refs(&full));
        files.push(fs::read(path).unwrap());
    }
    assert!(!files[0].is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn just_identified_cls_carries_moment_warning() {
    let out = ok(&[
        "estimate", "--input", WAGES, "--response", "lwage", "--endogenous", "educ", "--instruments", "distcol",
        "--estimators", "cls-tsls", "--bootstrap-reps", "20", "--format", "json",
    ]);
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["data"]["k"], 1);
    assert_eq!(doc["data"]["l"], 1);
    let warnings = doc["results"][0]["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("moments may not exist")), "{warnings:?}");
}

#[test]
fn simulate_writes_three_statistics_per_estimator() {
    let out = ok(&[
        "simulate", "--model", "i", "--alpha", "0.25", "--gamma", "0.5", "--n", "100", "--iterations", "100",
        "--seed", "7",
    ]);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["version", "model", "alpha", "gamma", "n", "l", "beta", "T", "B", "seed", "estimator", "statistic", "value"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // one scenario, four estimators
    assert_eq!(rows.len(), 4 * 3);
    assert!(rows.iter().all(|r| &r[7] == "100" && &r[9] == "7"));
    let stats: Vec<&str> = rows.iter().take(3).map(|r| &r[11]).collect();
    assert_eq!(stats, ["bias", "sd", "rmse"]);
}

#[test]
fn simulate_table_goes_to_stdout_with_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let out = ok(&[
        "simulate", "--alpha", "0.25", "--gamma", "0.3,0.5", "--n", "100", "--iterations", "20", "--estimators",
        "ols,tsls", "--output", path.to_str().unwrap(),
    ]);
    assert!(out.starts_with("RMSE"));
    assert_eq!(out.lines().count(), 1 + 1 + 2);
    assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn simulate_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "grid.csv", "alpha,gamma,n,l\n0.1,0.5,60,4\n0.4,0.3,80,2\n");
    let out = ok(&[
        "simulate", "--model", "ii", "--grid", grid.to_str().unwrap(), "--iterations", "10", "--estimators",
        "tsls",
    ]);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(out.as_bytes()).records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 3);
    assert_eq!(&rows[0][5], "4");
    assert_eq!(&rows[3][5], "2");
    assert_eq!(&rows[3][4], "80");
}

#[test]
fn alpha_out_of_bounds_is_rejected_with_the_inequality() {
    let out = convexiv(&["simulate", "--alpha", "0.7", "--gamma", "0.1", "--n", "100", "--iterations", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let line: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(line["error"]["kind"], "input");
    assert!(line["error"]["message"].as_str().unwrap().contains("alpha must satisfy alpha < sqrt(3/8)"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn input_and_numerical_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "toy.csv", TOY);
    let input = input.to_str().unwrap();
    let missing = convexiv(&["estimate", "--input", input, "--response", "y", "--endogenous", "w", "--instruments", "z"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));

    let bad = write(dir.path(), "bad.csv", "y,x,z\n1,2,3\n1,oops,3\n1,2,\n2,3,4\n5,1,2\n");
    let out = convexiv(&["estimate", "--input", bad.to_str().unwrap(), "--response", "y", "--endogenous", "x", "--instruments", "z"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("row 3"), "{err}");

    // Exogenous column collinear with the endogenous predictor.
    let collinear = write(dir.path(), "col.csv", "y,x,w,z\n1,1,2,1\n2,2,4,0\n2,3,6,2\n4,4,8,1\n3,5,10,3\n6,6,12,1\n");
    let out = convexiv(&[
        "estimate", "--input", collinear.to_str().unwrap(), "--response", "y", "--endogenous", "x", "--exogenous",
        "w", "--instruments", "z", "--estimators", "ols",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let line: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(line["error"]["kind"], "numerical");
}

#[test]
fn noise_free_bootstrap_has_zero_sd() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("y,x,z\n");
    for i in 0..12 {
        let z = (i as f64 * 0.7).sin() + i as f64 * 0.1;
        let x = 1.5 * z + (i % 3) as f64;
        body.push_str(&format!("{:?},{:?},{:?}\n", 2.0 * x, x, z));
    }
    let input = write(dir.path(), "exact.csv", &body);
    let out = ok(&[
        "bootstrap", "--input", input.to_str().unwrap(), "--response", "y", "--endogenous", "x", "--instruments",
        "z", "--bootstrap-reps", "2", "--format", "json",
    ]);
    let doc: Value = serde_json::from_str(&out).unwrap();
    let c = &doc["coefficients"][0];
    assert!(c["sd"].as_f64().unwrap() < 1e-14, "{c}");
    assert!((c["estimate"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(doc["pi_star"]["count"], 2);
}

#[test]
fn bootstrap_is_thread_count_invariant() {
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let mut args = vec!["bootstrap".to_string()];
        args.extend(wage_args(&["--bootstrap-reps", "100", "--seed", "5", "--threads", threads]));
        outputs.push(ok(&refs(&args)));
    }
    assert_eq!(outputs[0], outputs[1]);

    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        outputs.push(ok(&[
            "simulate", "--alpha", "0.4", "--gamma", "0.3", "--n", "100", "--iterations", "40", "--estimators",
            "ols,tsls,cls-jive", "--bootstrap-reps", "10", "--threads", threads,
        ]));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bootstrap_cls_jive_reports_interval_and_pi_distribution() {
    let mut args = vec!["bootstrap".to_string()];
    args.extend(wage_args(&["--variant", "cls-jive", "--bootstrap-reps", "20", "--format", "json"]));
    let doc: Value = serde_json::from_str(&ok(&refs(&args))).unwrap();
    assert_eq!(doc["variant"], "cls-jive");
    for c in doc["coefficients"].as_array().unwrap() {
        let (lo, hi) = (c["ci_lower"].as_f64().unwrap(), c["ci_upper"].as_f64().unwrap());
        assert!(lo <= c["mean"].as_f64().unwrap() && c["mean"].as_f64().unwrap() <= hi, "{c}");
    }
    let pi = &doc["pi_star"];
    assert!(pi["min"].as_f64().unwrap() >= 0.0 && pi["max"].as_f64().unwrap() <= 1.0);
}

fn csv_values(out: &str, column: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let idx = rdr.headers().unwrap().iter().position(|h| h == column).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn json_and_csv_carry_identical_numbers() {
    let base = wage_args(&["--estimators", "ols,jive,cls-tsls", "--bootstrap-reps", "25"]);
    let mut csv_args = vec!["estimate".to_string()];
    csv_args.extend(base.clone());
    let mut json_args = csv_args.clone();
    json_args.extend(["--format".to_string(), "json".to_string()]);
    let csv_out = ok(&refs(&csv_args));
    let doc: Value = serde_json::from_str(&ok(&refs(&json_args))).unwrap();

    let mut coefs = Vec::new();
    let mut ses = Vec::new();
    for r in doc["results"].as_array().unwrap() {
        coefs.extend(r["coefficients"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()));
        ses.extend(r["std_errors"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()));
    }
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&csv_values(&csv_out, "estimate")), bits(&coefs));
    assert_eq!(bits(&csv_values(&csv_out, "std_error")), bits(&ses));

    let sim = ["simulate", "--alpha", "0.25", "--gamma", "0.5", "--n", "100", "--iterations", "30"];
    let csv_out = ok(&sim);
    let mut json_sim = sim.to_vec();
    json_sim.extend(["--format", "json"]);
    let doc: Value = serde_json::from_str(&ok(&json_sim)).unwrap();
    let mut values = Vec::new();
    for e in doc["scenarios"][0]["estimators"].as_array().unwrap() {
        for stat in ["bias", "sd", "rmse"] {
            values.push(e[stat].as_f64().unwrap());
        }
    }
    assert_eq!(bits(&csv_values(&csv_out, "value")), bits(&values));
}

#[test]
fn bad_flags_exit_with_input_code() {
    assert_eq!(convexiv(&["simulate", "--estimators", "lasso"]).status.code(), Some(2));
    assert_eq!(convexiv(&["estimate"]).status.code(), Some(2));
    assert_eq!(convexiv(&["--version"]).status.code(), Some(0));
    let out = convexiv(&["simulate", "--alpha", "0.25", "--gamma", "0.5", "--n", "100", "--iterations", "5", "--estimators", "cls-jive", "--bootstrap-reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
