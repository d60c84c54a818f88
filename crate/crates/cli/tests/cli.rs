use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value as Json;
use tempfile::TempDir;
use tracemeta_cli::{cmd_check, cmd_enumerate, cmd_run, render, CheckConfig, RunConfig, VERSION};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(format!("{name}.ppl"))
}

fn tracemeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracemeta")).args(args).output().expect("binary runs")
}

fn json(bytes: &[u8]) -> Json {
    serde_json::from_slice(bytes).expect("JSON output")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SINGLES: &str = r#"{"mix":[
    {"weight":"1/2","strategy":{"by-labels":["x"]},"sub":{"blackbox":"enum-gibbs"}},
    {"weight":"1/2","strategy":{"by-labels":["y"]},"sub":{"blackbox":"enum-gibbs"}}]}"#;

const WITH_PAIR: &str = r#"{"mix":[
    {"weight":"1/3","strategy":{"by-labels":["x"]},"sub":{"blackbox":"enum-gibbs"}},
    {"weight":"1/3","strategy":{"by-labels":["y"]},"sub":{"blackbox":"enum-gibbs"}},
    {"weight":"1/3","strategy":{"by-labels":["x","y"]},"sub":{"blackbox":"enum-gibbs"}}]}"#;

#[test]
fn fair_coin_run_matches_the_posterior() {
    let cfg = RunConfig { iters: 10_000, seed: 7, ..RunConfig::new(corpus("fair_coin")) };
    let report = cmd_run(&cfg).unwrap();
    let p_true = report["samples"]["marginals"]["x"]["#t"]["frequency"].as_f64().unwrap();
    assert!((p_true - 0.5).abs() < 0.02);
    assert!(report["exact"]["tv"].as_f64().unwrap() < 0.02);
    assert_eq!(report["exact"]["marginals"]["x"]["#t"], "1/2");
    assert_eq!(report["tool"]["version"], VERSION);
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["metaprogram"]["blackbox"], "enum-gibbs");
}

#[test]
fn burn_in_covering_every_iteration_leaves_no_samples() {
    let out = tracemeta(&["run", corpus("fair_coin").to_str().unwrap(), "--iters", "50", "--burnin", "50"]);
    assert!(out.status.success());
    let report = json(&out.stdout);
    assert_eq!(report["samples"]["count"], 0);
    assert_eq!(report["samples"]["traces"], Json::Array(vec![]));
    assert!(report["exact"]["tv"].is_null());
}

#[test]
fn malformed_metaprogram_is_a_user_error_with_a_path() {
    let dir = TempDir::new().unwrap();
    let mp = write(&dir, "bad.json", r#"{"mix":[{"weight":"half","strategy":"all-choices","sub":{"blackbox":"prior-mh"}}]}"#);
    let out = tracemeta(&["run", corpus("fair_coin").to_str().unwrap(), "--metaprogram", &mp]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert_eq!(err["error"]["path"], "mix[0].weight");
    assert_eq!(err["error"]["kind"], "input");
}

#[test]
fn enumerate_reports_exact_rationals() {
    let report = cmd_enumerate(&corpus("two_flip"), 4096).unwrap();
    assert_eq!(report["posterior"], serde_json::json!(["27/34", "7/34"]));
    assert_eq!(report["total_mass"], "17/50");
    assert_eq!(report["traces"][0]["density"], "27/100");
    let report = cmd_enumerate(&corpus("deterministic"), 4096).unwrap();
    assert_eq!(report["posterior"], serde_json::json!(["1"]));
}

#[test]
fn enumeration_over_the_cap_fails() {
    let out = tracemeta(&["enumerate", corpus("chain").to_str().unwrap(), "--cap", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert!(err["error"]["message"].as_str().unwrap().contains("enumeration cap exceeded"));
}

#[test]
fn check_detects_the_xor_split() {
    let dir = TempDir::new().unwrap();
    let cfg = CheckConfig {
        metaprogram_path: Some(write(&dir, "s.json", SINGLES).into()),
        iters: 1000,
        ..CheckConfig::new(corpus("xor"))
    };
    let report = cmd_check(&cfg).unwrap();
    assert_eq!(report["connectivity"], false);
    assert_eq!(report["irreducible"], false);
    assert_eq!(report["stationary"], true);
    assert_eq!(report["connectivity_mode"], "exact");
    assert_eq!(report["strategies"][0]["reversible"], true);

    let cfg = CheckConfig { metaprogram_path: Some(write(&dir, "p.json", WITH_PAIR).into()), ..cfg };
    let report = cmd_check(&cfg).unwrap();
    for key in ["connectivity", "irreducible", "aperiodic", "stationary"] {
        assert_eq!(report[key], true, "{key}");
    }
    let table = report["tv_table"].as_array().unwrap();
    assert_eq!(table.last().unwrap()["iters"], 1000);
}

#[test]
fn check_of_the_black_box_is_clean() {
    let report = cmd_check(&CheckConfig { iters: 0, ..CheckConfig::new(corpus("chain")) }).unwrap();
    assert_eq!(report["stationarity_residual"], "0");
    for key in ["connectivity", "irreducible", "aperiodic", "stationary"] {
        assert_eq!(report[key], true, "{key}");
    }
    assert_eq!(report["tv_table"], Json::Array(vec![]));
}

#[test]
fn check_recurses_into_nested_mixtures() {
    let dir = TempDir::new().unwrap();
    let nested = r#"{"mix":[{"weight":"1","strategy":{"by-labels":["a","b"]},
        "sub":{"mix":[{"weight":"1","strategy":{"by-labels":["b"]},"sub":{"blackbox":"enum-gibbs"}}]}}]}"#;
    let cfg = CheckConfig {
        metaprogram_path: Some(write(&dir, "n.json", nested).into()),
        iters: 0,
        ..CheckConfig::new(corpus("chain"))
    };
    let report = cmd_check(&cfg).unwrap();
    let inner = report["strategies"][0]["nested"].as_array().unwrap();
    assert!(!inner.is_empty());
    for entry in inner {
        assert!(entry["subprogram"].as_str().unwrap().contains("observe"));
        assert_eq!(entry["report"]["strategies"][0]["reversible"], true);
        assert_eq!(entry["report"]["stationarity_residual"], "0");
    }
    // Moving only b never reaches traces with a different a.
    assert_eq!(report["irreducible"], false);
}

#[test]
fn graph_shades_sample_nodes() {
    let out = tracemeta(&["graph", corpus("two_flip").to_str().unwrap(), "--seed", "1"]);
    assert!(out.status.success());
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("fillcolor").count(), 2);
    assert!(dot.contains("style=dashed"));

    let out = tracemeta(&["graph", corpus("deterministic").to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches("fillcolor").count(), 0);

    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.ppl", "(assume x (flip 1/2)");
    assert_eq!(tracemeta(&["graph", &bad]).status.code(), Some(1));
}

#[test]
fn extract_emits_the_subprogram() {
    let out = tracemeta(&["extract", corpus("two_flip").to_str().unwrap(), "--strategy", r#"{"by-labels":["x"]}"#]);
    assert!(out.status.success());
    let report = json(&out.stdout);
    let src = report["subprogram"].as_str().unwrap();
    assert!(src.contains("(observe (flip"));
    assert_eq!(report["subproblem"]["absorbing"].as_array().unwrap().len(), 1);
    assert!(report["subtrace"]["statements"].is_array());

    let out = tracemeta(&["extract", corpus("two_flip").to_str().unwrap(), "--strategy", r#"{"by-labels":3}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"]["path"], "strategy.by-labels");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let mp = write(&dir, "g.json", SINGLES);
    let program = corpus("product");
    let args = ["run", program.to_str().unwrap(), "--metaprogram", &mp, "--iters", "2000", "--seed", "5", "--chains", "3"];
    let first = tracemeta(&args);
    assert!(first.status.success());
    for _ in 0..2 {
        assert_eq!(tracemeta(&args).stdout, first.stdout);
    }
    let report = json(&first.stdout);
    assert_eq!(report["samples"]["count"], 6000);
    assert_eq!(report["config"]["chains"], 3);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("report.json");
    let out = tracemeta(&["enumerate", corpus("fair_coin").to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(path).unwrap();
    assert_eq!(written, render(&cmd_enumerate(&corpus("fair_coin"), 4096).unwrap()));
}
