mod common;

use common::*;
use equivguard::artifact::{
    ast::AstKind,
    solc::{compile, standard_input},
    ArtifactError, SourceUnit,
};
use equivguard::evm::Cfg;
use semver::Version;
use tiny_keccak::{Hasher, Keccak};

fn reference_selector(sig: &str) -> [u8; 4] {
    let mut k = Keccak::v256();
    k.update(sig.as_bytes());
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    [out[0], out[1], out[2], out[3]]
}

#[test]
fn ccra_compiles_to_one_artifact_with_both_functions() {
    let a = compile_one("golden/ccra_signature_verifier.sol");
    assert_eq!(a.contract_name, "SignatureVerifier");
    let names: Vec<_> = a.abi.iter().map(|f| f.name.as_str()).collect();
    assert!(names.contains(&"setter"));
    assert!(names.contains(&"verifyEIP712"));
    assert!(!a.deployed_bytecode.is_empty());
    assert!(!a.settings.optimizer);
}

#[test]
fn trivial_contract_selector_matches_reference_keccak() {
    let a = compile_one("misc/trivial.sol");
    assert_eq!(a.abi.len(), 1);
    assert_eq!(a.abi[0].signature, "f()");
    assert_eq!(a.abi[0].selector, reference_selector("f()"));
}

#[test]
fn every_fixture_selector_matches_reference_keccak() {
    for f in all_fixture_files() {
        for a in compile_fixture(&f) {
            for func in &a.abi {
                assert_eq!(func.selector, reference_selector(&func.signature), "{f}: {}", func.signature);
            }
        }
    }
}

#[test]
fn empty_input_yields_no_artifacts() {
    let v = Version::new(0, 8, 26);
    assert!(compile(&[], &v, &compile_opts()).unwrap().is_empty());
}

#[test]
fn missing_compiler_version_is_reported() {
    let src = SourceUnit::new("x.sol", "pragma solidity 0.4.11; contract X {}").unwrap();
    let r = compile(&[src], &Version::new(0, 4, 11), &compile_opts());
    assert!(matches!(r, Err(ArtifactError::CompilerNotFound(_))), "{r:?}");
}

#[test]
fn compilation_is_deterministic() {
    let a = compile_one("golden/tdt_time_lock.sol");
    let b = compile_one("golden/tdt_time_lock.sol");
    assert_eq!(a.deployed_bytecode, b.deployed_bytecode);
    assert_eq!(*a.ast_root, *b.ast_root);
    let s = vec![SourceUnit::new("a.sol", "contract A {}").unwrap()];
    let o = equivguard::artifact::CompilerSettings::default();
    assert_eq!(standard_input(&s, &o), standard_input(&s, &o));
}

#[test]
fn source_map_is_total_and_in_bounds() {
    for f in all_fixture_files() {
        for a in compile_fixture(&f) {
            let instrs = equivguard::evm::disassemble_runtime(&a.deployed_bytecode).unwrap();
            assert_eq!(a.source_map.len(), instrs.len(), "{f}");
            for e in &a.source_map {
                if let Some(r) = e.range {
                    let su = a.source(r.file.unwrap()).expect("file index");
                    assert!(r.end() <= su.content.len(), "{f}: {r:?}");
                }
            }
        }
    }
}

#[test]
fn ast_children_nest_inside_parents() {
    fn check(n: &equivguard::artifact::AstNode) {
        for c in &n.children {
            if n.kind != AstKind::Root && c.src.file.is_some() && n.src.file.is_some() {
                assert!(n.src.contains(&c.src), "{:?} {:?} in {:?} {:?}", c.kind, c.src, n.kind, n.src);
            }
            check(c);
        }
    }
    for f in all_fixture_files() {
        for a in compile_fixture(&f) {
            check(&a.ast_root);
        }
    }
}

#[test]
fn literals_are_normalized() {
    let a = compile_one("golden/pca_hardcoded_router.sol");
    let mut seen = Vec::new();
    a.ast_root.walk(&mut |n| {
        if n.kind == AstKind::Literal {
            if let Some(v) = n.str_attr("normalized") {
                seen.push(v.to_string());
            }
        }
    });
    assert!(seen.contains(&"0x7a250d5630B4cF539739dF2C5dAcb4c659F2488D".to_string()), "{seen:?}");
    let b = compile_one("golden/tdt_time_lock.sol");
    let mut nums = Vec::new();
    b.ast_root.walk(&mut |n| {
        if n.kind == AstKind::Literal {
            nums.extend(n.str_attr("normalized").map(str::to_string));
        }
    });
    assert!(nums.contains(&"43200".to_string()));
}

#[test]
fn gli_contains_gasleft_and_its_assembly_is_opaque() {
    let a = compile_one("misc/assembly_ecrecover.sol");
    let mut opaque = 0;
    a.ast_root.walk(&mut |n| {
        if n.kind == AstKind::InlineAssembly {
            assert!(n.opaque);
            opaque += 1;
        }
    });
    assert_eq!(opaque, 1);
}

#[test]
fn dispatcher_entries_equal_abi_selectors() {
    for f in ["misc/two_functions.sol", "golden/ccra_signature_verifier.sol", "benign/erc20_plain.sol"] {
        let a = compile_one(f);
        let cfg = Cfg::from_bytecode(&a.deployed_bytecode).unwrap();
        let want: std::collections::BTreeSet<u32> = a.abi.iter().map(|x| x.selector_u32()).collect();
        let got: std::collections::BTreeSet<u32> = cfg.function_entries.keys().copied().collect();
        assert_eq!(got, want, "{f}");
    }
}
