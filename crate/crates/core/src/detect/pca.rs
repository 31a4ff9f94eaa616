use super::{pick_witness, Analysis, Candidate};
use crate::evm::Opcode;
use crate::ipdg::{CallKind, Expr, LitKind, StmtKind};
use crate::taint::{is_precompile_or_zero, reverse_search, source_matches, LitClass, PathVerdict, SourcePattern, TaintSpec};
use crate::Smell;
use std::collections::BTreeMap;

pub fn detect_pca(a: &Analysis) -> Vec<Candidate> {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Pca));
    let mut by_sink: BTreeMap<u32, Vec<&crate::taint::TaintPath>> = BTreeMap::new();
    for p in &paths {
        by_sink.entry(p.sink()).or_default().push(p);
    }
    let lit = SourcePattern::Literal(LitClass::Address);
    let mut out = Vec::new();
    for (sink, ps) in by_sink {
        if !a.is_analyzed(sink) {
            continue;
        }
        let from_literal = |p: &&crate::taint::TaintPath| source_matches(g.node(p.source()), &lit);
        // any caller-controlled definition means the address is configurable
        if !ps.iter().all(from_literal) {
            continue;
        }
        if ps.iter().any(|p| p.verdict == PathVerdict::Sanitized) {
            continue;
        }
        let node = g.node(sink);
        let Some(site) = node.facts.calls.iter().find(|c| {
            matches!(c.kind, CallKind::External { .. } | CallKind::LowLevel { .. }) && c.target.is_some()
        }) else {
            continue;
        };
        if let Some(Expr::Lit(l)) = site.target.as_deref().map(Expr::peel) {
            if l.value.is_some_and(is_precompile_or_zero) {
                continue;
            }
        }
        let addresses: Vec<String> = ps
            .iter()
            .flat_map(|p| g.node(p.source()).facts.literals.iter())
            .filter(|l| l.kind == LitKind::Address && l.value.is_some_and(|v| !is_precompile_or_zero(v)))
            .map(|l| l.text.clone())
            .collect();
        let Some(addr) = addresses.first().cloned() else { continue };
        let w = pick_witness(Smell::Pca, &paths, sink);
        let calls = vec![Opcode::Call, Opcode::Staticcall, Opcode::Delegatecall, Opcode::Callcode];
        let probe = a.probe_at(sink, site.src, Some(calls), &w);
        let name = site.name.rsplit('.').next().unwrap_or(&site.name);
        let msg = format!("call `{name}` targets hardcoded address {addr}");
        let mut cand = a.candidate(Smell::Pca, sink, w, msg, probe);
        cand.finding.metadata.insert("address".into(), addr.into());
        if node.stmt_kind != StmtKind::ExternalSink {
            out.push(cand);
        }
    }
    out
}
