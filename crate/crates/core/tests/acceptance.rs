//! Release acceptance suite: one PASS/FAIL line per criterion.

mod common;

use common::emulator::check_jumps;
use common::graphs::{arb_graph, random_spec};
use common::{all_fixture_files, compile_fixture, compile_opts, fixture_cache, fixtures};
use equivguard::detect::{run_all, Confidence, DetectConfig, DetectOutput, Finding, Mode, Verification};
use equivguard::ipdg::{build_ipdg, StmtKind};
use equivguard::report::{percent, run_corpus, AnalyzeOptions, EvalStats};
use equivguard::taint::{forward_closure, reverse_search, TaintSpec};
use equivguard::Smell;
use proptest::test_runner::{Config, TestRunner};
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const GOLDEN: [(&str, Smell, usize); 6] = [
    ("golden/ccra_signature_verifier.sol", Smell::Ccra, 13),
    ("golden/tdt_time_lock.sol", Smell::Tdt, 13),
    ("golden/pca_hardcoded_router.sol", Smell::Pca, 15),
    ("golden/gli_gas_gate.sol", Smell::Gli, 13),
    ("golden/fgr_reentrant_withdraw.sol", Smell::Fgr, 11),
    ("golden/bhm_fork_height.sol", Smell::Bhm, 9),
];

const MUTANTS: [(&str, Smell); 6] = [
    ("mutants/ccra_chainid_checked.sol", Smell::Ccra),
    ("mutants/tdt_no_interval.sol", Smell::Tdt),
    ("mutants/pca_ctor_address.sol", Smell::Pca),
    ("mutants/gli_param_gas.sol", Smell::Gli),
    ("mutants/fgr_cei_ordered.sol", Smell::Fgr),
    ("mutants/bhm_no_height.sol", Smell::Bhm),
];

const INFEASIBLE: [&str; 3] = [
    "infeasible/inf_bhm_contradiction.sol",
    "infeasible/inf_ccra_contradiction.sol",
    "infeasible/inf_require_false.sol",
];

fn detect(rel: &str, mode: Mode) -> DetectOutput {
    let config = DetectConfig {
        mode,
        ..DetectConfig::default()
    };
    run_all(&compile_fixture(rel), &config)
}

fn smells(fs: &[Finding]) -> Vec<Smell> {
    fs.iter().map(|f| f.smell).collect()
}

fn golden_suite() -> Outcome {
    let mut slowest = Duration::ZERO;
    for (file, smell, line) in GOLDEN {
        let t = Instant::now();
        let out = detect(file, Mode::Full);
        let took = t.elapsed();
        slowest = slowest.max(took);
        ensure!(took < Duration::from_secs(60), "{file}: {took:?}");
        ensure!(smells(&out.findings) == vec![smell], "{file}: got {:?}", smells(&out.findings));
        let f = &out.findings[0];
        ensure!(f.primary_location.line == line, "{file}: line {}", f.primary_location.line);
        ensure!(f.confidence == Confidence::Confirmed, "{file}: {:?}", f.confidence);
    }
    Ok(format!("6/6 one-hot and confirmed, slowest {slowest:?}"))
}

fn mutation_suite() -> Outcome {
    let mut suppressed = 0;
    for (file, smell) in MUTANTS {
        let out = detect(file, Mode::Full);
        ensure!(!smells(&out.findings).contains(&smell), "{file}: {smell} still reported");
        suppressed += 1;
    }
    Ok(format!("{suppressed}/6 suppressed"))
}

/// Percentage rounded half-up to two places, by integer arithmetic.
fn pct_oracle(num: u64, den: u64) -> String {
    let scaled = (num as u128 * 100_000 / den as u128 + 5) / 10;
    format!("{}.{:02}%", scaled / 100, scaled % 100)
}

fn micro_corpus() -> Outcome {
    let opts = AnalyzeOptions::discover(fixture_cache());
    let opts = AnalyzeOptions {
        compile: compile_opts(),
        ..opts
    };
    let corpus = run_corpus(&fixtures().join("corpus/micro.json"), &opts, 0).map_err(|e| e.to_string())?;
    ensure!(corpus.entries.len() == 30, "{} entries", corpus.entries.len());
    ensure!(corpus.stats.failures.is_empty(), "failures: {:?}", corpus.stats.failures);
    let positives = corpus.entries.iter().filter(|e| e.labels.as_ref().is_some_and(|l| !l.is_empty())).count();
    ensure!(positives == 6, "{positives} positives");

    let mut hand: BTreeMap<Smell, (u64, u64, u64)> = BTreeMap::new();
    for e in &corpus.entries {
        let labels = e.labels.clone().unwrap_or_default();
        for s in Smell::ALL {
            let c = hand.entry(s).or_default();
            match (labels.contains(&s), e.predicted.contains(&s)) {
                (true, true) => c.0 += 1,
                (false, true) => c.1 += 1,
                (true, false) => c.2 += 1,
                (false, false) => {}
            }
        }
    }
    for (s, (tp, fp, fn_)) in &hand {
        let got = &corpus.stats.per_smell[s];
        ensure!((got.tp, got.fp, got.fn_) == (*tp, *fp, *fn_), "{s}: counts differ from hand count");
    }
    ensure!(corpus.stats.overall_precision == Some(1.0), "precision {:?}", corpus.stats.overall_precision);
    ensure!(corpus.stats.overall_recall == Some(1.0), "recall {:?}", corpus.stats.overall_recall);

    let row = |tp, fp, fn_| EvalStats::from_counts([(Smell::Ccra, tp, fp, fn_)]).per_smell[&Smell::Ccra].clone();
    let t6 = row(86, 2, 0);
    let t7 = row(422, 22, 4);
    for (got, want) in [
        (percent(t6.precision), pct_oracle(86, 88)),
        (percent(t7.precision), pct_oracle(422, 444)),
        (percent(t7.recall), pct_oracle(422, 426)),
    ] {
        ensure!(got == want, "{got} != {want}");
    }
    Ok(format!(
        "precision={} recall={}; {} {} {}",
        percent(corpus.stats.overall_precision),
        percent(corpus.stats.overall_recall),
        percent(t6.precision),
        percent(t7.precision),
        percent(t7.recall)
    ))
}

fn cfg_oracle() -> Outcome {
    let (mut contracts, mut compared) = (0, 0);
    for rel in all_fixture_files() {
        for art in compile_fixture(&rel) {
            if art.deployed_bytecode.is_empty() {
                continue;
            }
            let r = check_jumps(&art.deployed_bytecode).map_err(|e| format!("{rel}/{}: {e}", art.contract_name))?;
            contracts += 1;
            compared += r.compared;
        }
    }
    ensure!(contracts >= 10, "only {contracts} contracts");
    ensure!(compared > 0, "no constant jumps");
    Ok(format!("{contracts} contracts, {compared} constant jumps identical"))
}

fn taint_oracle() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 128,
        failure_persistence: None,
        ..Config::default()
    });
    let spec = random_spec();
    runner
        .run(&arb_graph(), |g| {
            let pairs: BTreeSet<(u32, u32)> = reverse_search(&g, &spec).iter().map(|p| (p.source(), p.sink())).collect();
            proptest::prop_assert_eq!(pairs, forward_closure(&g, &spec));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let mut programs = 0;
    for f in all_fixture_files() {
        let g = build_ipdg(&compile_fixture(&f));
        let statements = g
            .nodes
            .iter()
            .filter(|n| {
                !matches!(
                    n.stmt_kind,
                    StmtKind::FunctionEntry | StmtKind::FunctionExit | StmtKind::StateVarDecl | StmtKind::ExternalSink
                )
            })
            .count();
        if statements > 50 {
            continue;
        }
        programs += 1;
        for smell in Smell::ALL {
            let spec = TaintSpec::for_smell(smell);
            let pairs: BTreeSet<(u32, u32)> = reverse_search(&g, &spec).iter().map(|p| (p.source(), p.sink())).collect();
            ensure!(pairs == forward_closure(&g, &spec), "{f} {smell}");
        }
    }
    Ok(format!("128 generated graphs and {programs} corpus programs agree"))
}

fn solver_soundness() -> Outcome {
    let mut reachable = 0;
    for f in all_fixture_files() {
        for finding in detect(&f, Mode::Full).findings {
            if let Verification::Reachable { replayed, .. } = finding.verification {
                ensure!(replayed, "{f}: {} model does not replay", finding.smell);
                reachable += 1;
            }
        }
    }
    ensure!(reachable > 0, "no reachable verdicts");
    let out = detect("infeasible/inf_require_false.sol", Mode::Full);
    let confirmed = out.findings.iter().filter(|f| f.confidence == Confidence::Confirmed).count();
    ensure!(confirmed == 0, "{confirmed} confirmed behind require(false)");
    Ok(format!("{reachable} reachable verdicts replay; require(false) gives 0 confirmed"))
}

fn ablation_parity() -> Outcome {
    let mut static_golden = 0;
    for (file, smell, line) in GOLDEN {
        let out = detect(file, Mode::StaticOnly);
        ensure!(smells(&out.findings) == vec![smell], "{file}: {:?}", smells(&out.findings));
        let f = &out.findings[0];
        ensure!(f.confidence == Confidence::Static && f.primary_location.line == line, "{file}");
        static_golden += 1;
    }
    let count = |mode| INFEASIBLE.iter().map(|f| detect(f, mode).findings.len()).sum::<usize>();
    let (st, full) = (count(Mode::StaticOnly), count(Mode::Full));
    ensure!(full < st, "full {full} vs static-only {st}");
    Ok(format!("{static_golden} static findings; infeasible set {st} -> {full}"))
}

fn multichain() -> Outcome {
    let out = detect("multichain/anyswap_like.sol", Mode::Full);
    ensure!(smells(&out.findings) == vec![Smell::Ccra], "{:?}", smells(&out.findings));
    let f = &out.findings[0];
    ensure!(f.confidence == Confidence::Confirmed, "{:?}", f.confidence);
    ensure!(f.metadata["hardcoded_chainid"] == 122, "metadata {:?}", f.metadata);
    Ok("confirmed CCRA, hardcoded_chainid=122".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("golden suite", golden_suite),
        ("mutation suite", mutation_suite),
        ("micro-corpus metrics", micro_corpus),
        ("CFG oracle", cfg_oracle),
        ("taint oracle", taint_oracle),
        ("solver soundness", solver_soundness),
        ("ablation parity", ablation_parity),
        ("multichain integration", multichain),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
