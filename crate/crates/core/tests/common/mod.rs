#![allow(dead_code)]

pub mod emulator;
pub mod graphs;

use equivguard::artifact::{
    solc::{compile_auto, load_source_file},
    Cache, CompilationArtifact, CompileOptions,
};
use std::path::PathBuf;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn contract_path(rel: &str) -> PathBuf {
    fixtures().join("contracts").join(rel)
}

/// Checked-in compiler outputs; tests run offline once these exist.
pub fn fixture_cache() -> Cache {
    Cache::new(fixtures().join("solc-cache"))
}

pub fn compile_opts() -> CompileOptions {
    CompileOptions::discover(Some(fixture_cache()))
}

pub fn compile_fixture(rel: &str) -> Vec<CompilationArtifact> {
    let sources = load_source_file(&contract_path(rel)).expect("load");
    compile_auto(&sources, None, &compile_opts()).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn compile_one(rel: &str) -> CompilationArtifact {
    let mut arts = compile_fixture(rel);
    assert_eq!(arts.len(), 1, "{rel}: expected one concrete contract");
    arts.remove(0)
}

pub fn all_fixture_files() -> Vec<String> {
    let mut out = Vec::new();
    for dir in ["golden", "mutants", "benign", "infeasible", "multichain", "misc"] {
        let d = fixtures().join("contracts").join(dir);
        let mut names: Vec<String> = std::fs::read_dir(&d)
            .unwrap()
            .flatten()
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".sol"))
            .collect();
        names.sort();
        out.extend(names.into_iter().map(|n| format!("{dir}/{n}")));
    }
    out
}
