use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn tree_ldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tree-ldp")).args(args).env_remove("TREE_LDP_SEED").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json_result(out: &Output) -> Value {
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    doc["result"].clone()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

/// Data rows of a CSV document, skipping `#` lines.
fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn couple_check_reports_equality() {
    let out = tree_ldp(&["couple-check", "--d", "3", "--n", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_result(&out);
    assert_eq!(r["ok"], true);
    assert_eq!(r["message"], "max abs diff ≤ 1e-12");
}

#[test]
fn lambda_star_lists_the_zero_and_infinity() {
    let out = tree_ldp(&["lambda-star", "--d", "3", "--x-hi", "1.2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(!text.contains('\r'));
    let rows = data_lines(&text);
    assert_eq!(rows[0], "x,value");
    assert!(rows.contains(&"0.3333333333333333,0"));
    assert_eq!(*rows.last().unwrap(), "1.2,inf");
}

#[test]
fn flags_override_config_file_and_manifest_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"d": 4, "n": 7, "paths": 3, "seed": 1}"#).unwrap();
    let out_path = dir.path().join("walks.csv");
    let args = ["simulate", "-c", cfg.to_str().unwrap(), "--seed", "5", "-o", out_path.to_str().unwrap()];
    assert_eq!(tree_ldp(&args).status.code(), Some(0));
    let first = fs::read(&out_path).unwrap();
    assert_eq!(tree_ldp(&args).status.code(), Some(0));
    assert_eq!(first, fs::read(&out_path).unwrap(), "reruns are byte-identical");

    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("# seed: 5"));
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 1 + 3 * 8);
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.path().join("walks.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["mu"].as_array().unwrap().len(), 4);
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(text.contains(&format!("# config_sha256: {hash}")));
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tree-ldp"));
        cmd.args(["simulate", "--n", "20", "--format", "json"]).env_remove("TREE_LDP_SEED");
        if let Some(s) = env {
            cmd.env("TREE_LDP_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        let out = cmd.output().unwrap();
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        doc["manifest"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 0);
    assert_eq!(run(Some("17"), None), 17);
    assert_eq!(run(Some("17"), Some("3")), 3);
}

#[test]
fn config_errors_exit_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"d": 3, "typo": 1}"#).unwrap();
    let out = tree_ldp(&["dist", "-c", cfg.to_str().unwrap(), "--n", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["exit_code"], 2);

    let out =
        tree_ldp(&["mc-rate", "--mu", "0.5,0.3,0.2", "--x", "0.5", "--rho", "0.1", "--n-list", "20", "--tilt", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "precondition");

    let out = tree_ldp(&["mgf", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");
}

#[test]
fn enumeration_cap_exits_3() {
    let out = tree_ldp(&["dist", "--d", "3", "--n", "40", "--law", "enumerate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "cap_exceeded");
}

#[test]
fn non_uniform_two_step_law() {
    let out = tree_ldp(&["dist", "--mu", "0.5,0.3,0.2", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "distance,probability");
    let p0: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((p0 - 0.38).abs() < 1e-12);
}

#[test]
fn concat_verify_below_threshold_is_reported_not_failed() {
    let out = tree_ldp(&["concat-verify", "--n", "10", "--k", "2,3", "--trials", "40"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_result(&out);
    assert_eq!(r["hypothesis_met"], false);
    assert_eq!(r["members"], "exhaustive");
    for rep in r["reports"].as_array().unwrap() {
        let k = rep["k"].as_u64().unwrap();
        assert_eq!(rep["n_tilde"].as_u64().unwrap(), 10 * k + 4 * (k - 1));
        assert_eq!(rep["step_length_ok"], rep["tuples"]);
    }
}

#[test]
fn rate_path_reports_both_variants() {
    let out = tree_ldp(&["rate-path", "--breakpoints", "0.5", "--slopes", "1,-0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let variants = json_result(&out)["variants"].as_array().unwrap().clone();
    assert_eq!(variants[0]["variant"], "paper-literal");
    assert_eq!(variants[0]["value"], "inf");
    assert_eq!(variants[1]["variant"], "increment-rate");
    assert!(variants[1]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn mgf_table_csv_with_negative_lambdas() {
    let out =
        tree_ldp(&["mgf", "--lambda-lo", "-2", "--lambda-hi", "2", "--lambda-points", "5", "--n-list", "20,40,80,160"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "lambda_1,n_20,n_40,n_80,n_160,estimate,halfwidth");
    assert_eq!(rows.len(), 6);
    assert!(rows[3].starts_with("0,0,0,0,0,0"));
}

#[test]
fn acceptance_subset_emits_json() {
    let out = tree_ldp(&["acceptance", "--only", "1,4"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_result(&out);
    assert_eq!(r["passed"], 2);
    assert_eq!(r["failed"], 0);
    assert_eq!(r["results"][1]["id"], 4);

    let out = tree_ldp(&["acceptance", "--only", "11"]);
    assert_eq!(out.status.code(), Some(2));
}
