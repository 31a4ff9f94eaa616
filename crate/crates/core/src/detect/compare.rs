//! Detectors driven by comparisons in branch conditions: TDT, BHM and GLI.

use super::{guarded_statement, pick_witness, Analysis, Candidate};
use crate::evm::Opcode;
use crate::ipdg::{fold, EdgeKind, EnvRead, Expr, Ipdg, NodeId, StmtKind, VarKind};
use crate::symexec::PathCheck;
use crate::taint::{reverse_search, TaintSpec};
use crate::Smell;
use ruint::aliases::U256;
use serde_json::json;

const COMPARISONS: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

/// Comparison sub-expressions of a condition.
pub(crate) fn comparisons(e: &Expr) -> Vec<(&Expr, &Expr)> {
    let mut out = Vec::new();
    e.walk(&mut |x| {
        if let Expr::Binary(op, l, r) = x {
            if COMPARISONS.contains(&op.as_str()) {
                out.push((l.as_ref(), r.as_ref()));
            }
        }
    });
    out
}

fn is_env(e: &Expr, which: EnvRead) -> bool {
    matches!(e.peel(), Expr::Env(x) if *x == which)
}

/// Whether `e` carries a block number remembered in storage (directly or via a local copy).
fn stored(g: &Ipdg, n: NodeId, e: &Expr) -> bool {
    let state = |v: &str| g.vars.get(v).is_some_and(|i| i.kind == VarKind::State);
    e.vars().iter().any(|v| {
        if state(v) {
            return true;
        }
        g.incoming(n).any(|edge| {
            matches!(&edge.kind, EdgeKind::Data(x) if x == v)
                && g.node(edge.from).facts.uses.iter().any(|u| state(u))
        })
    })
}

/// Interval constant of `NUMBER cmp stored + C` or `NUMBER - stored cmp C`.
pub(crate) fn interval(g: &Ipdg, n: NodeId, l: &Expr, r: &Expr) -> Option<U256> {
    let k = g.constants_of();
    for (a, b) in [(l, r), (r, l)] {
        if is_env(a, EnvRead::Number) {
            if let Expr::Binary(op, x, y) = b.peel() {
                if op == "+" {
                    for (c, s) in [(x, y), (y, x)] {
                        if let Some(v) = fold(c, k) {
                            if fold(s, k).is_none() && stored(g, n, s) {
                                return Some(v);
                            }
                        }
                    }
                }
            }
        }
        if let Expr::Binary(op, x, y) = a.peel() {
            if op == "-" && is_env(x, EnvRead::Number) && fold(y, k).is_none() && stored(g, n, y) {
                if let Some(v) = fold(b, k) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Constant compared directly against the given environment read.
pub(crate) fn bare_bound(g: &Ipdg, which: EnvRead, l: &Expr, r: &Expr) -> Option<U256> {
    let k = g.constants_of();
    for (a, b) in [(l, r), (r, l)] {
        if is_env(a, which) {
            if let Some(v) = fold(b, k) {
                return Some(v);
            }
        }
    }
    None
}

fn branch_nodes<'g>(a: &'g Analysis, which: EnvRead) -> impl Iterator<Item = NodeId> + 'g {
    a.ipdg
        .nodes
        .iter()
        .filter(move |n| {
            matches!(n.stmt_kind, StmtKind::If | StmtKind::Loop | StmtKind::Require)
                && n.facts.env.contains(&which)
                && a.is_analyzed(n.id)
        })
        .map(|n| n.id)
}

/// Probe reaching the code guarded by branch `n`.
fn guarded_probe(a: &Analysis, n: NodeId, w: &crate::taint::TaintPath) -> super::Probe {
    match guarded_statement(&a.ipdg, n) {
        Some(s) => a.probe_at(n, a.ipdg.node(s).src, None, w),
        None => a.probe_at(n, a.ipdg.node(n).src, Some(vec![Opcode::Jumpi]), w),
    }
}

fn to_json(v: U256) -> serde_json::Value {
    match u64::try_from(v) {
        Ok(x) => json!(x),
        Err(_) => json!(v.to_string()),
    }
}

pub fn detect_tdt(a: &Analysis) -> Vec<Candidate> {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Tdt));
    let mut out = Vec::new();
    for n in branch_nodes(a, EnvRead::Number) {
        let Some(cond) = &g.node(n).expr else { continue };
        let hit = comparisons(cond)
            .into_iter()
            .filter_map(|(l, r)| interval(g, n, l, r))
            .find(|c| *c >= a.config.tdt_threshold);
        let Some(c) = hit else { continue };
        let w = pick_witness(Smell::Tdt, &paths, n);
        let probe = guarded_probe(a, n, &w);
        let msg = format!("lock interval of {c} blocks assumes a fixed block time");
        let mut cand = a.candidate(Smell::Tdt, n, w, msg, probe);
        cand.finding.metadata.insert("interval_blocks".into(), to_json(c));
        out.push(cand);
    }
    out
}

pub fn detect_bhm(a: &Analysis) -> Vec<Candidate> {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Bhm));
    let mut out = Vec::new();
    for n in branch_nodes(a, EnvRead::Number) {
        let Some(cond) = &g.node(n).expr else { continue };
        let hit = comparisons(cond)
            .into_iter()
            .filter(|(l, r)| interval(g, n, l, r).is_none())
            .filter_map(|(l, r)| bare_bound(g, EnvRead::Number, l, r))
            .find(|c| *c >= a.config.bhm_threshold);
        let Some(c) = hit else { continue };
        let w = pick_witness(Smell::Bhm, &paths, n);
        let mut probe = a.probe_at(n, g.node(n).src, Some(vec![Opcode::Jumpi]), &w);
        probe.required.push(PathCheck::BothBranches);
        let msg = format!("behaviour switches at absolute block height {c}");
        let mut cand = a.candidate(Smell::Bhm, n, w, msg, probe);
        cand.finding.metadata.insert("block_height".into(), to_json(c));
        out.push(cand);
    }
    out
}

pub fn detect_gli(a: &Analysis) -> Vec<Candidate> {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Gli));
    let mut out = Vec::new();
    for n in branch_nodes(a, EnvRead::GasLeft) {
        let Some(cond) = &g.node(n).expr else { continue };
        let hit = comparisons(cond)
            .into_iter()
            .find_map(|(l, r)| bare_bound(g, EnvRead::GasLeft, l, r));
        let Some(c) = hit else { continue };
        let w = pick_witness(Smell::Gli, &paths, n);
        let probe = guarded_probe(a, n, &w);
        let what = if g.node(n).stmt_kind == StmtKind::Loop { "loop continuation" } else { "branch" };
        let msg = format!("{what} gated on gasleft() against fixed bound {c}");
        let mut cand = a.candidate(Smell::Gli, n, w, msg, probe);
        cand.finding.metadata.insert("gas_constant".into(), to_json(c));
        out.push(cand);
    }
    out
}
