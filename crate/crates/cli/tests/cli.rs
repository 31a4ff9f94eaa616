use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn contract(rel: &str) -> String {
    fixtures().join("contracts").join(rel).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equivguard"))
        .args(args)
        .arg("--cache-dir")
        .arg(fixtures().join("solc-cache"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ccra_json_has_one_ccra_and_exits_1() {
    let o = run(&["analyze", &contract("golden/ccra_signature_verifier.sol"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let findings: Vec<&Value> = v["contracts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["findings"].as_array().unwrap())
        .collect();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0]["smell"], "CCRA");
}

#[test]
fn empty_contract_exits_0() {
    let o = run(&["analyze", &contract("benign/empty.sol")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
}

#[test]
fn detector_filter_drops_other_smells() {
    let o = run(&["analyze", &contract("golden/ccra_signature_verifier.sol"), "--detectors", "tdt"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn text_line_is_tab_separated() {
    let o = run(&["analyze", &contract("golden/tdt_time_lock.sol"), "--mode", "static-only"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let cols: Vec<&str> = out.lines().next().unwrap().split('\t').collect();
    assert_eq!(cols.len(), 4);
    assert_eq!(cols[0], "TDT");
    assert_eq!(cols[2], "static");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["analyze", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["analyze"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "x.sol", "--detectors", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "x.sol", "--mode", "half"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_an_analysis_error() {
    let o = run(&["analyze", "/nonexistent/contract.sol"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn sarif_goes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.sarif");
    let o = run(&[
        "analyze",
        &contract("golden/bhm_fork_height.sol"),
        "--format",
        "sarif",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["version"], "2.1.0");
    let results = v["runs"][0]["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["ruleId"], "BHM");
}

#[test]
fn corpus_prints_metrics_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.json");
    let manifest = fixtures().join("corpus/micro.json");
    let o = run(&[
        "corpus",
        manifest.to_str().unwrap(),
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("OVERALL\tprecision=100.00%\trecall=100.00%"), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains("TP=1\tFP=0\tFN=0")).count(), 6);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 30);
    assert_eq!(v["stats"]["overall_recall"], 1.0);
}
