use crate::ipdg::{CallKind, Ipdg, NodeId};
use std::collections::BTreeSet;

/// Whether a node sends ether to another account.
pub fn interaction_kind(g: &Ipdg, n: NodeId) -> Option<CallKind> {
    g.node(n)
        .facts
        .calls
        .iter()
        .find(|c| match c.kind {
            CallKind::Transfer | CallKind::Send | CallKind::LowLevel { with_value: true } => true,
            CallKind::External { .. } => c.value.is_some(),
            _ => false,
        })
        .map(|c| c.kind.clone())
}

/// Pairs (interaction, later state write) where the written state was read at or before the interaction.
pub fn check_cei_order(g: &Ipdg, function: &str) -> Vec<(NodeId, NodeId)> {
    let Some(f) = g.functions.get(function) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for &i in &f.body {
        if interaction_kind(g, i).is_none() {
            continue;
        }
        let at = g.node(i).order;
        let read: BTreeSet<&String> = f
            .body
            .iter()
            .map(|&n| g.node(n))
            .filter(|n| n.order <= at)
            .flat_map(|n| n.facts.uses.iter())
            .filter(|v| g.state_vars.contains_key(*v))
            .collect();
        for &w in &f.body {
            let wn = g.node(w);
            if wn.order > at && wn.facts.defs.iter().any(|d| read.contains(d)) {
                out.push((i, w));
            }
        }
    }
    out.sort_unstable();
    out
}
