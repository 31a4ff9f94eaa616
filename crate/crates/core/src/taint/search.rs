use super::spec::*;
use crate::ipdg::{EdgeKind, Ipdg, NodeId, StmtKind};
use crate::Smell;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathVerdict {
    Suspicious,
    Sanitized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintPath {
    pub spec: Smell,
    /// Source first, sink last.
    pub nodes: Vec<NodeId>,
    pub sanitizers_hit: Vec<(String, NodeId)>,
    pub verdict: PathVerdict,
    /// The depth bound cut the search short somewhere below this sink.
    pub low_confidence: bool,
}

impl TaintPath {
    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn sink(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaintDiagnostic {
    DepthBoundHit { sink: NodeId },
    PathCapHit { sink: NodeId },
    OpaqueKilled { node: NodeId, sink: NodeId },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchOutcome {
    pub paths: Vec<TaintPath>,
    pub diagnostics: Vec<TaintDiagnostic>,
}

/// Predecessors of `n` along which taint may have arrived, given what matters at `n`.
pub(crate) fn taint_preds(g: &Ipdg, n: NodeId, rel: &Relevance) -> Vec<NodeId> {
    let is_entry = g.node(n).stmt_kind == StmtKind::FunctionEntry;
    let mut out: Vec<NodeId> = g
        .incoming(n)
        .filter(|e| match &e.kind {
            EdgeKind::Data(v) => rel.allows_var(v),
            EdgeKind::Return => rel.allows_callee(&g.node(e.from).fn_key()),
            EdgeKind::Call => is_entry,
            EdgeKind::Control => false,
        })
        .map(|e| e.from)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn sinks_of(g: &Ipdg, spec: &TaintSpec) -> Vec<(NodeId, Relevance)> {
    g.nodes
        .iter()
        .filter_map(|n| sink_relevance(n, spec).map(|r| (n.id, r)))
        .collect()
}

pub fn reverse_search(g: &Ipdg, spec: &TaintSpec) -> Vec<TaintPath> {
    reverse_search_full(g, spec).paths
}

pub fn reverse_search_full(g: &Ipdg, spec: &TaintSpec) -> SearchOutcome {
    let mut out = SearchOutcome::default();
    if spec.sources.is_empty() {
        return out;
    }
    for (sink, rel) in sinks_of(g, spec) {
        let mut found: Vec<Vec<NodeId>> = Vec::new();
        let mut truncated = false;
        let mut capped = false;
        if is_source(g.node(sink), spec) {
            found.push(vec![sink]);
        } else {
            let mut stack = vec![sink];
            let mut on = vec![false; g.nodes.len()];
            on[sink as usize] = true;
            backtrack(g, spec, &rel, &mut stack, &mut on, &mut found, &mut truncated, &mut capped, &mut out.diagnostics);
        }
        if truncated {
            out.diagnostics.push(TaintDiagnostic::DepthBoundHit { sink });
        }
        if capped {
            out.diagnostics.push(TaintDiagnostic::PathCapHit { sink });
        }
        found.sort();
        found.dedup();
        for nodes in found {
            out.paths.push(classify(g, spec, nodes, truncated));
        }
    }
    out.paths.sort_by(|a, b| (a.sink(), &a.nodes).cmp(&(b.sink(), &b.nodes)));
    out.diagnostics.sort_by_key(|d| format!("{d:?}"));
    out.diagnostics.dedup();
    out
}

#[allow(clippy::too_many_arguments)]
fn backtrack(
    g: &Ipdg,
    spec: &TaintSpec,
    sink_rel: &Relevance,
    stack: &mut Vec<NodeId>,
    on: &mut [bool],
    found: &mut Vec<Vec<NodeId>>,
    truncated: &mut bool,
    capped: &mut bool,
    diags: &mut Vec<TaintDiagnostic>,
) {
    if *capped {
        return;
    }
    let cur = *stack.last().unwrap();
    let rel = if stack.len() == 1 { sink_rel.clone() } else { Relevance::all() };
    for p in taint_preds(g, cur, &rel) {
        if on[p as usize] {
            continue;
        }
        let pn = g.node(p);
        if pn.opaque {
            diags.push(TaintDiagnostic::OpaqueKilled { node: p, sink: stack[0] });
            continue;
        }
        if is_source(pn, spec) {
            let mut path: Vec<NodeId> = stack.iter().rev().copied().collect();
            path.insert(0, p);
            found.push(path);
            if found.len() >= spec.path_cap {
                *capped = true;
                return;
            }
            continue;
        }
        if stack.len() >= spec.depth {
            *truncated = true;
            continue;
        }
        on[p as usize] = true;
        stack.push(p);
        backtrack(g, spec, sink_rel, stack, on, found, truncated, capped, diags);
        stack.pop();
        on[p as usize] = false;
    }
}

fn classify(g: &Ipdg, spec: &TaintSpec, nodes: Vec<NodeId>, low_confidence: bool) -> TaintPath {
    let sanitizers_hit: Vec<(String, NodeId)> = spec
        .sanitizers
        .iter()
        .filter_map(|z| sanitizer_hit(g, &nodes, z).map(|n| (z.id(), n)))
        .collect();
    let verdict = if sanitizers_hit.is_empty() {
        PathVerdict::Suspicious
    } else {
        PathVerdict::Sanitized
    };
    TaintPath {
        spec: spec.smell,
        nodes,
        sanitizers_hit,
        verdict,
        low_confidence,
    }
}

/// Forward worklist propagation from every source; the oracle for [`reverse_search`].
pub fn forward_closure(g: &Ipdg, spec: &TaintSpec) -> BTreeSet<(NodeId, NodeId)> {
    let mut pairs = BTreeSet::new();
    if spec.sources.is_empty() {
        return pairs;
    }
    let sources: Vec<NodeId> = g
        .nodes
        .iter()
        .filter(|n| is_source(n, spec) && !n.opaque)
        .map(|n| n.id)
        .collect();
    let all = Relevance::all();
    for (t, rel) in sinks_of(g, spec) {
        if is_source(g.node(t), spec) {
            pairs.insert((t, t));
            continue;
        }
        let entry = taint_preds(g, t, &rel);
        for &s in &sources {
            let mut seen = vec![false; g.nodes.len()];
            seen[s as usize] = true;
            seen[t as usize] = true;
            let mut work = VecDeque::from([s]);
            let mut hit = false;
            while let Some(p) = work.pop_front() {
                if entry.contains(&p) {
                    hit = true;
                    break;
                }
                for e in g.outgoing(p) {
                    let n = e.to;
                    if seen[n as usize] {
                        continue;
                    }
                    let nn = g.node(n);
                    if nn.opaque || is_source(nn, spec) || !taint_preds(g, n, &all).contains(&p) {
                        continue;
                    }
                    seen[n as usize] = true;
                    work.push_back(n);
                }
            }
            if hit {
                pairs.insert((s, t));
            }
        }
    }
    pairs
}

/// Every node the sink's tainted operands depend on, ignoring source boundaries.
pub fn backward_slice(g: &Ipdg, sink: NodeId, rel: &Relevance) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([sink]);
    let mut work = VecDeque::new();
    for p in taint_preds(g, sink, rel) {
        if seen.insert(p) {
            work.push_back(p);
        }
    }
    let all = Relevance::all();
    while let Some(n) = work.pop_front() {
        if g.node(n).opaque {
            continue;
        }
        for p in taint_preds(g, n, &all) {
            if seen.insert(p) {
                work.push_back(p);
            }
        }
    }
    seen
}
