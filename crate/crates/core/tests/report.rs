mod common;

use common::{compile_fixture, compile_opts, contract_path, fixture_cache, fixtures};
use equivguard::detect::{Confidence, DetectConfig, Finding, Location, Mode, Verification};
use equivguard::report::*;
use equivguard::taint::{PathVerdict, TaintPath};
use equivguard::Smell;
use jsonschema::{Draft, JSONSchema};
use proptest::prelude::*;
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

fn config(mode: Mode) -> DetectConfig {
    DetectConfig {
        mode,
        ..DetectConfig::default()
    }
}

fn report_for(rel: &str, cfg: &DetectConfig) -> Report {
    let arts = compile_fixture(rel);
    analyze_artifacts(
        InputDescriptor::File {
            path: contract_path(rel).display().to_string(),
        },
        &arts,
        cfg,
        Duration::ZERO,
    )
}

fn schema(path: &std::path::Path, draft: Draft) -> JSONSchema {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    JSONSchema::options().with_draft(draft).compile(&v).expect("schema compiles")
}

fn report_schema() -> JSONSchema {
    schema(&fixtures().join("../../../../docs/report.schema.json"), Draft::Draft7)
}

fn sarif_schema() -> JSONSchema {
    schema(&fixtures().join("schemas/sarif-2.1.0.json"), Draft::Draft4)
}

fn assert_valid(s: &JSONSchema, v: &Value) {
    if let Err(errs) = s.validate(v) {
        let msgs: Vec<String> = errs.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:#?}");
    }
}

const GOLDEN: [&str; 6] = [
    "golden/ccra_signature_verifier.sol",
    "golden/tdt_time_lock.sol",
    "golden/pca_hardcoded_router.sol",
    "golden/gli_gas_gate.sol",
    "golden/fgr_reentrant_withdraw.sol",
    "golden/bhm_fork_height.sol",
];

#[test]
fn ccra_report_round_trips_and_matches_schema() {
    let r = report_for("golden/ccra_signature_verifier.sol", &config(Mode::Full));
    assert_eq!(r.finding_count(), 1);
    assert_eq!(r.exit_code(), EXIT_FINDINGS);
    let json = r.to_json();
    assert_eq!(Report::from_json(&json).unwrap(), r);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_valid(&report_schema(), &v);
    assert_eq!(v["contracts"][0]["findings"][0]["smell"], "CCRA");
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    for phase in ["compile", "cfg", "ipdg", "taint", "symexec", "solve"] {
        assert!(r.timing.contains_key(phase), "missing phase {phase}");
    }
}

#[test]
fn text_output_is_tab_separated() {
    let r = report_for("golden/ccra_signature_verifier.sol", &config(Mode::Full));
    let text = r.render_text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let cols: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(cols.len(), 4);
    assert_eq!(cols[0], "CCRA");
    assert!(cols[1].ends_with("ccra_signature_verifier.sol:13"), "{}", cols[1]);
    assert_eq!(cols[2], "confirmed");
}

#[test]
fn exit_codes_follow_findings() {
    let empty = report_for("benign/empty.sol", &config(Mode::Full));
    assert_eq!(empty.finding_count(), 0);
    assert_eq!(empty.exit_code(), EXIT_CLEAN);
    assert_eq!(empty.contracts.len(), 1);
    assert_valid(&report_schema(), &serde_json::to_value(&empty).unwrap());
    let tdt_only = DetectConfig {
        enabled: [Smell::Tdt].into_iter().collect(),
        ..config(Mode::Full)
    };
    assert_eq!(report_for("golden/ccra_signature_verifier.sol", &tdt_only).exit_code(), EXIT_CLEAN);
}

#[test]
fn golden_sarif_has_six_results_and_rules() {
    let mut merged: Option<Report> = None;
    for rel in GOLDEN {
        let r = report_for(rel, &config(Mode::Full));
        match &mut merged {
            None => merged = Some(r),
            Some(m) => m.contracts.extend(r.contracts),
        }
    }
    let doc = emit_sarif(&merged.unwrap());
    assert_valid(&sarif_schema(), &doc);
    let results = doc["runs"][0]["results"].as_array().unwrap();
    assert_eq!(results.len(), 6);
    let ids: BTreeSet<&str> = results.iter().map(|r| r["ruleId"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 6);
    let rules = doc["runs"][0]["tool"]["driver"]["rules"].as_array().unwrap();
    let rule_ids: BTreeSet<&str> = rules.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(rule_ids, ids);
    for r in results {
        assert_eq!(r["properties"]["confidence"], "confirmed");
        let region = &r["locations"][0]["physicalLocation"]["region"];
        assert!(region["startLine"].as_u64().unwrap() >= 1);
        assert!(region["startColumn"].as_u64().unwrap() >= 1);
        let idx = r["ruleIndex"].as_u64().unwrap() as usize;
        assert_eq!(rules[idx]["id"], r["ruleId"]);
    }
}

#[test]
fn empty_report_is_valid_sarif() {
    let r = Report::new(InputDescriptor::Artifacts, &config(Mode::Full));
    let doc = emit_sarif(&r);
    assert_valid(&sarif_schema(), &doc);
    assert_eq!(doc["runs"][0]["results"].as_array().unwrap().len(), 0);
    assert_valid(&report_schema(), &serde_json::to_value(&r).unwrap());
}

#[test]
fn static_only_findings_render_as_static() {
    let r = report_for("golden/tdt_time_lock.sol", &config(Mode::StaticOnly));
    let doc = emit_sarif(&r);
    assert_valid(&sarif_schema(), &doc);
    assert_eq!(doc["runs"][0]["results"][0]["properties"]["confidence"], "static");
    assert!(r.render_text().contains("\tstatic\t"));
}

/// Percentage rounded to two decimals, computed in integer arithmetic.
fn pct_oracle(num: u64, den: u64) -> String {
    let scaled = (num as u128 * 100_000 / den as u128 + 5) / 10;
    format!("{}.{:02}%", scaled / 100, scaled % 100)
}

#[test]
fn table_count_fixtures() {
    assert_eq!(pct_oracle(86, 88), "97.73%");
    assert_eq!(pct_oracle(422, 444), "95.05%");
    assert_eq!(pct_oracle(422, 426), "99.06%");

    let ccra = SmellStats::from_counts(86, 2, 0);
    assert_eq!(percent(ccra.precision), pct_oracle(86, 88));
    assert_eq!(ccra.sample_count, 88);

    let all = SmellStats::from_counts(422, 22, 4);
    assert_eq!(percent(all.precision), "95.05%");
    assert_eq!(percent(all.recall), "99.06%");
}

#[test]
fn zero_entry_manifest_has_undefined_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, r#"{"entries": []}"#).unwrap();
    let opts = AnalyzeOptions {
        compile: compile_opts(),
        ..AnalyzeOptions::discover(fixture_cache())
    };
    let c = run_corpus(&m, &opts, 2).unwrap();
    assert_eq!(c.stats.evaluated, 0);
    assert_eq!(c.stats.per_smell.len(), 6);
    for s in c.stats.per_smell.values() {
        assert_eq!((s.tp, s.fp, s.fn_, s.sample_count), (0, 0, 0, 0));
        assert_eq!((s.precision, s.recall), (None, None));
    }
    assert_eq!((c.stats.overall_precision, c.stats.overall_recall), (None, None));
    assert!(c.stats.render_text().contains("precision=undefined"));
}

#[test]
fn failing_entries_are_listed_not_counted() {
    let dir = tempfile::tempdir().unwrap();
    let golden = contract_path("golden/tdt_time_lock.sol");
    let manifest = serde_json::json!({"entries": [
        {"name": "ok", "source_dir": golden, "labels": ["TDT"]},
        {"name": "missing", "source_dir": "nope.sol", "labels": ["TDT"]},
        {"name": "unlabeled", "source_dir": golden},
    ]});
    let m = dir.path().join("m.json");
    std::fs::write(&m, manifest.to_string()).unwrap();
    let opts = AnalyzeOptions {
        compile: compile_opts(),
        detect: config(Mode::StaticOnly),
        ..AnalyzeOptions::discover(fixture_cache())
    };
    let c = run_corpus(&m, &opts, 2).unwrap();
    assert_eq!(c.stats.evaluated, 1);
    assert_eq!(c.stats.failures.len(), 1);
    assert_eq!(c.stats.failures[0].name, "missing");
    assert_eq!(c.stats.unlabeled, vec!["unlabeled".to_string()]);
    let tdt = &c.stats.per_smell[&Smell::Tdt];
    assert_eq!((tdt.tp, tdt.fp, tdt.fn_), (1, 0, 0));
    let back: CorpusReport = serde_json::from_str(&c.to_json()).unwrap();
    assert_eq!(back, c);
}

fn finding(smell: Smell, contract: &str, line: usize, confidence: Confidence) -> Finding {
    Finding {
        smell,
        contract: contract.into(),
        function: "f".into(),
        primary_location: Location {
            file: "a.sol".into(),
            line,
            column: 5,
            start: line * 10,
            length: 3,
        },
        witness: TaintPath {
            spec: smell,
            nodes: vec![line as u32],
            sanitizers_hit: vec![],
            verdict: PathVerdict::Suspicious,
            low_confidence: false,
        },
        verification: match confidence {
            Confidence::Confirmed => Verification::Reachable {
                model: BTreeMap::from([("cd_0".into(), "0x1".into())]),
                replayed: true,
            },
            Confidence::Likely => Verification::Unknown {
                reason: "solver-timeout".into(),
            },
            Confidence::Static => Verification::NotRun,
        },
        confidence,
        message: format!("{smell} at {line}"),
        metadata: BTreeMap::new(),
        checks: BTreeMap::new(),
        timed_out: false,
    }
}

fn arb_finding() -> impl Strategy<Value = Finding> {
    (
        prop::sample::select(Smell::ALL.to_vec()),
        prop::sample::select(vec!["A", "B", "C"]),
        1usize..500,
        prop::sample::select(vec![Confidence::Confirmed, Confidence::Likely, Confidence::Static]),
    )
        .prop_map(|(s, c, l, conf)| finding(s, c, l, conf))
}

fn report_with(findings: Vec<Finding>) -> Report {
    let mut r = Report::new(InputDescriptor::Artifacts, &config(Mode::Full));
    let mut by: BTreeMap<String, Vec<Finding>> = BTreeMap::new();
    for f in findings {
        by.entry(f.contract.clone()).or_default().push(f);
    }
    r.contracts = by
        .into_iter()
        .map(|(name, findings)| ContractReport {
            name,
            source_path: "a.sol".into(),
            findings,
        })
        .collect();
    r
}

/// `v` agrees with `num / den` to two decimal places of a percentage.
fn agrees_2dp(v: f64, num: u64, den: u64) -> bool {
    let floor = (num as u128 * 10_000 / den as u128) as f64;
    let scaled = v * 10_000.0;
    scaled >= floor - 1e-6 && scaled <= floor + 1.0 + 1e-6
}

proptest! {
    #[test]
    fn exit_code_contract(fs in prop::collection::vec(arb_finding(), 0..12)) {
        let n = fs.len();
        let r = report_with(fs);
        prop_assert_eq!(r.exit_code(), if n == 0 { 0 } else { 1 });
        prop_assert_eq!(r.render_text().lines().count(), n);
        prop_assert_eq!(emit_sarif(&r)["runs"][0]["results"].as_array().unwrap().len(), n);
    }

    #[test]
    fn random_reports_round_trip(fs in prop::collection::vec(arb_finding(), 0..8)) {
        let r = report_with(fs);
        prop_assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn metric_identities(counts in prop::collection::vec((0u64..500, 0u64..500, 0u64..500), 6)) {
        let rows: Vec<(Smell, u64, u64, u64)> =
            Smell::ALL.iter().zip(&counts).map(|(s, c)| (*s, c.0, c.1, c.2)).collect();
        let e = EvalStats::from_counts(rows.clone());
        for (s, tp, fp, fn_) in &rows {
            let st = &e.per_smell[s];
            prop_assert_eq!(st.sample_count, tp + fp);
            match st.precision {
                Some(p) => prop_assert!(agrees_2dp(p, *tp, tp + fp)),
                None => prop_assert_eq!(tp + fp, 0),
            }
            match st.recall {
                Some(r) => prop_assert!(agrees_2dp(r, *tp, tp + fn_)),
                None => prop_assert_eq!(tp + fn_, 0),
            }
        }
        // weighted mean of per-class precisions collapses to pooled TP over pooled samples
        let tp: u64 = rows.iter().map(|r| r.1).sum();
        let samples: u64 = rows.iter().map(|r| r.1 + r.2).sum();
        match e.overall_precision {
            Some(p) => prop_assert!((p - tp as f64 / samples as f64).abs() < 1e-12),
            None => prop_assert_eq!(samples, 0),
        }
    }

    #[test]
    fn prediction_join_matches_counting(
        rows in prop::collection::vec(
            (prop::collection::btree_set(prop::sample::select(Smell::ALL.to_vec()), 0..3),
             prop::collection::btree_set(prop::sample::select(Smell::ALL.to_vec()), 0..3)),
            0..20)
    ) {
        let smells: BTreeSet<Smell> = Smell::ALL.into_iter().collect();
        let e = EvalStats::from_predictions(&smells, rows.iter().map(|(l, p)| (l, p)));
        prop_assert_eq!(e.evaluated, rows.len());
        for s in Smell::ALL {
            let tp = rows.iter().filter(|(l, p)| l.contains(&s) && p.contains(&s)).count() as u64;
            let fp = rows.iter().filter(|(l, p)| !l.contains(&s) && p.contains(&s)).count() as u64;
            let fn_ = rows.iter().filter(|(l, p)| l.contains(&s) && !p.contains(&s)).count() as u64;
            let st = &e.per_smell[&s];
            prop_assert_eq!((st.tp, st.fp, st.fn_), (tp, fp, fn_));
        }
    }
}
