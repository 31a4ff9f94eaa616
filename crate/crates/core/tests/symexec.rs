mod common;

use common::compile_one;
use equivguard::artifact::{CompilationArtifact, SrcRange};
use equivguard::evm::Opcode;
use equivguard::symexec::*;
use ruint::aliases::U256;
use std::collections::BTreeSet;
use std::time::Duration;

fn solver() -> SolverConfig {
    SolverConfig::discover(Duration::from_secs(10)).expect("z3 on PATH or EQUIVGUARD_SOLVER")
}

fn range_of(a: &CompilationArtifact, needle: &str) -> SrcRange {
    let (file, unit) = a
        .sources
        .iter()
        .enumerate()
        .find(|(_, u)| u.path == a.source_path)
        .expect("source unit");
    let start = unit.content.find(needle).unwrap_or_else(|| panic!("{needle} not in source"));
    SrcRange {
        start,
        length: needle.len(),
        file: Some(file),
    }
}

fn selector(a: &CompilationArtifact, name: &str) -> u32 {
    a.abi.iter().find(|f| f.name == name).expect("abi entry").selector_u32()
}

fn guidance(prog: &Program, r: SrcRange, pred: impl Fn(Opcode) -> bool) -> Guidance {
    let targets = prog.offsets_within(&r, pred);
    assert!(!targets.is_empty(), "no target instruction in range");
    Guidance {
        targets,
        prefer: vec![r],
    }
}

fn with_k(k: u32) -> ExecConfig {
    ExecConfig {
        unroll: k,
        ..ExecConfig::default()
    }
}

#[test]
fn loop_exit_needs_enough_unrolling() {
    let a = compile_one("misc/loop_guard.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "payable(msg.sender).transfer(hits)"), Opcode::is_call);
    let sel = selector(&a, "run");
    let mut s = Session::start(&solver()).unwrap();
    let out = execute_path(&prog, Some(sel), &g, &with_k(2), Some(&mut s)).unwrap();
    assert!(matches!(out, PathOutcome::Reached(_)), "K=2 should reach the transfer");
    let out = execute_path(&prog, Some(sel), &g, &with_k(1), Some(&mut s)).unwrap();
    assert!(matches!(out, PathOutcome::Divergence { .. }), "K=1 cannot leave the loop");
}

#[test]
fn require_false_blocks_every_path() {
    let a = compile_one("infeasible/inf_require_false.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "ecrecover(hash, v, r, s)"), |o| o == Opcode::Staticcall);
    let out = execute_path(&prog, Some(selector(&a, "verify")), &g, &ExecConfig::default(), None).unwrap();
    assert!(matches!(out, PathOutcome::Divergence { .. }));
    let v = verify(&prog, Some(selector(&a, "verify")), &g, &ExecConfig::default(), &solver(), &[]);
    assert_eq!(v.status, Status::Unreachable);
}

#[test]
fn ecrecover_is_reachable_in_signature_verifier() {
    let a = compile_one("golden/ccra_signature_verifier.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "ecrecover(hash, v, r, s)"), |o| o == Opcode::Staticcall);
    let sel = selector(&a, "verifyEIP712");
    let v = verify(&prog, Some(sel), &g, &ExecConfig::default(), &solver(), &[PathCheck::ChainIdSolvable]);
    let Status::Reachable(model) = &v.status else { panic!("{:?}", v.status) };
    let st = v.state.as_ref().unwrap();
    assert!(replay_model(st, model));
    // the dispatcher constraint pins the selector word
    let cd0 = model.get("cd_0").copied().unwrap();
    assert_eq!(cd0 >> 224, U256::from(sel));
    // STATICCALL(gas, 1, ...) targets the ecrecover precompile
    assert_eq!(st.pool.as_const(st.peek(1).unwrap()), Some(U256::from(1)));
    assert_eq!(v.check(PathCheck::ChainIdSolvable), Some(true));
}

#[test]
fn contradictory_requires_are_unreachable() {
    let a = compile_one("infeasible/inf_ccra_contradiction.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "ecrecover(hash, v, r, s)"), |o| o == Opcode::Staticcall);
    let v = verify(&prog, Some(selector(&a, "verify")), &g, &ExecConfig::default(), &solver(), &[]);
    assert_eq!(v.status, Status::Unreachable);
}

#[test]
fn owner_check_model_replays_and_perturbation_fails() {
    let a = compile_one("misc/owner_check.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "value = v"), |o| o == Opcode::Sstore);
    let v = verify(
        &prog,
        Some(selector(&a, "set")),
        &g,
        &ExecConfig::default(),
        &solver(),
        &[PathCheck::CallerPermission, PathCheck::TimestampRestriction],
    );
    let Status::Reachable(model) = &v.status else { panic!("{:?}", v.status) };
    let st = v.state.as_ref().unwrap();
    assert!(replay_model(st, model));
    assert_eq!(v.check(PathCheck::CallerPermission), Some(true));
    assert_eq!(v.check(PathCheck::TimestampRestriction), Some(false));
    let mut bad = model.clone();
    let caller = bad.get("CALLER").copied().expect("caller constrained");
    bad.insert("CALLER".into(), caller ^ U256::from(1));
    assert!(!replay_model(st, &bad));
}

#[test]
fn empty_path_condition_replays_trivially() {
    assert!(replay_model(&SymbolicState::default(), &Model::new()));
}

/// Independent check of an unsat verdict: fix every other symbol at a model of
/// the remaining constraints and sweep the contradictory symbol over a grid.
#[test]
fn unsat_verdict_agrees_with_grid_search() {
    let a = compile_one("infeasible/inf_bhm_contradiction.sol");
    let prog = Program::from_artifact(&a).unwrap();
    let g = guidance(&prog, range_of(&a, "forked = true"), |o| o == Opcode::Sstore);
    let sel = selector(&a, "handleFork");
    let v = verify(&prog, Some(sel), &g, &ExecConfig::default(), &solver(), &[]);
    assert_eq!(v.status, Status::Unreachable);

    let PathOutcome::Reached(st) = execute_path(&prog, Some(sel), &g, &ExecConfig::default(), None).unwrap() else {
        panic!("unpruned search should reach the write");
    };
    let conj = st.conjuncts();
    let on_x = |c: &(ExprId, bool)| {
        leaves(&st.pool, &[c.0])
            .iter()
            .any(|l| matches!(st.pool.node(*l), Node::Sym(s) if s == "cd_4"))
    };
    assert!(conj.iter().filter(|c| on_x(c)).count() >= 2);
    let rest: Vec<_> = conj.iter().copied().filter(|c| !on_x(c)).collect();
    let roots: Vec<ExprId> = conj.iter().map(|c| c.0).collect();
    let want = leaves(&st.pool, &roots);
    let mut s = Session::start(&solver()).unwrap();
    let (r, m) = s.check_with_model(&st.pool, &rest, &want).unwrap();
    assert_eq!(r, SatResult::Sat);
    let mut m = m.unwrap();
    let grid: BTreeSet<U256> = (0u64..=12).map(U256::from).chain([U256::MAX, U256::from(1u64) << 255]).collect();
    for x in grid {
        m.insert("cd_4".into(), x);
        let all = conj
            .iter()
            .all(|(c, h)| st.pool.eval(*c, &m).is_some_and(|v| v.is_zero() != *h));
        assert!(!all, "x = {x} satisfies the path");
    }
}
