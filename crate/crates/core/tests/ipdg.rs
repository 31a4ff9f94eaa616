mod common;

use common::*;
use equivguard::ipdg::{build_ipdg, EdgeKind, Ipdg, StmtKind, VarKind};
use ruint::aliases::U256;

fn graph(rel: &str) -> Ipdg {
    build_ipdg(&compile_fixture(rel))
}

fn node_calling(g: &Ipdg, name: &str) -> u32 {
    let v: Vec<u32> = g.calls_named(name).collect();
    assert_eq!(v.len(), 1, "{name}: {v:?}");
    v[0]
}

#[test]
fn ccra_paths_to_ecrecover() {
    let g = graph("golden/ccra_signature_verifier.sol");
    let rec = node_calling(&g, "ecrecover");
    let setter = g.entry_of("SignatureVerifier.setter").unwrap();
    let verify = g.entry_of("SignatureVerifier.verifyEIP712").unwrap();
    let paths = g.paths_between(&[setter], &[rec], 64).unwrap();
    assert_eq!(paths.len(), 2, "{paths:?}");
    let chain_write = g
        .nodes
        .iter()
        .find(|n| n.function == "setter" && n.facts.defs.contains("SignatureVerifier.chainId"))
        .unwrap()
        .id;
    assert!(paths.iter().any(|p| p.contains(&chain_write)), "{paths:?}");
    assert!(!g.paths_between(&[verify], &[rec], 64).unwrap().is_empty());
    let hash = g
        .nodes
        .iter()
        .find(|n| n.facts.defs.contains("SignatureVerifier.verifyEIP712.hash"))
        .unwrap()
        .id;
    assert!(g
        .incoming(rec)
        .any(|e| e.from == hash && e.kind == EdgeKind::Data("SignatureVerifier.verifyEIP712.hash".into())));
}

#[test]
fn trivial_contract_has_entry_and_exit() {
    let g = graph("misc/trivial.sol");
    let f = &g.functions["C.f"];
    assert!(g.has_edge(f.entry, f.exit));
    assert_eq!(g.nodes.iter().filter(|n| n.function == "f").count(), 2);
    assert!(g.node(f.entry).external_entry);
}

#[test]
fn fgr_transfer_precedes_balance_reset() {
    let g = graph("golden/fgr_reentrant_withdraw.sol");
    let transfer = node_calling(&g, "transfer");
    let reset = g
        .nodes
        .iter()
        .find(|n| n.function == "withdraw" && n.stmt_kind == StmtKind::Assignment)
        .unwrap()
        .id;
    assert!(g.anti_deps.contains(&(transfer, reset, "EtherBank.balances".to_string())));
    assert!(g.node(transfer).order < g.node(reset).order);
}

#[test]
fn tdt_constant_folded() {
    let g = graph("golden/tdt_time_lock.sol");
    assert_eq!(g.constants_of().get("TimeLockedVault.BLOCKS_PER_WEEK"), Some(&U256::from(43200u32)));
    assert!(!g.is_constant("TimeLockedVault.balances"));
    assert_eq!(g.vars["TimeLockedVault.BLOCKS_PER_WEEK"].kind, VarKind::Constant);
}

#[test]
fn pca_literal_state_is_constant() {
    let g = graph("golden/pca_hardcoded_router.sol");
    let router = U256::from_str_radix("7a250d5630B4cF539739dF2C5dAcb4c659F2488D", 16).unwrap();
    assert_eq!(g.constants_of().get("SwapToken.RouterAddr"), Some(&router));
    assert_eq!(g.constants_of().get("SwapToken.uniswapRouter"), Some(&router));
}

#[test]
fn setter_written_state_is_not_constant() {
    let g = graph("benign/pca_owner_setter.sol");
    assert!(g.state_vars.keys().any(|v| !g.is_constant(v)));
    let g4 = graph("golden/ccra_signature_verifier.sol");
    assert!(!g4.is_constant("SignatureVerifier.chainId"));
}

#[test]
fn construction_is_deterministic() {
    for f in all_fixture_files() {
        let a = graph(&f).canonical_json();
        let b = graph(&f).canonical_json();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn edges_reference_existing_nodes_and_vars() {
    for f in all_fixture_files() {
        let g = graph(&f);
        for e in &g.edges {
            assert!((e.from as usize) < g.nodes.len() && (e.to as usize) < g.nodes.len());
            if let EdgeKind::Data(v) = &e.kind {
                assert!(g.vars.contains_key(v), "{f}: {v}");
                assert_ne!(e.from, e.to);
            }
        }
    }
}

#[test]
fn paths_between_trivial_cases() {
    let g = graph("misc/trivial.sol");
    let f = &g.functions["C.f"];
    assert_eq!(g.paths_between(&[f.entry], &[f.entry], 8).unwrap(), vec![vec![f.entry]]);
    assert!(g.paths_between(&[f.exit], &[f.entry], 8).unwrap().is_empty());
    assert!(g.paths_between(&[f.entry], &[f.exit], 0).unwrap().is_empty());
}
