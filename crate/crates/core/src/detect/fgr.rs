use super::{pick_witness, Analysis, Candidate, Diagnostic};
use crate::evm::Opcode;
use crate::ipdg::CallKind;
use crate::taint::{check_cei_order, interaction_kind, reverse_search, TaintSpec};
use crate::Smell;
use std::collections::BTreeMap;

pub fn detect_fgr(a: &Analysis) -> (Vec<Candidate>, Vec<Diagnostic>) {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Fgr));
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for key in g.functions.keys() {
        let mut writes: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (i, w) in check_cei_order(g, key) {
            writes.entry(i).or_default().push(w);
        }
        for (i, ws) in writes {
            if !a.is_analyzed(i) {
                continue;
            }
            let node = g.node(i);
            let written: Vec<String> = ws
                .iter()
                .flat_map(|w| g.node(*w).facts.defs.iter())
                .filter(|v| g.state_vars.contains_key(*v))
                .map(|v| v.rsplit('.').next().unwrap_or(v).to_string())
                .collect();
            let var = written.first().cloned().unwrap_or_default();
            let later = a.location(&g.node(ws[0]).src);
            match interaction_kind(g, i) {
                Some(kind @ (CallKind::Transfer | CallKind::Send)) => {
                    let prim = if kind == CallKind::Transfer { "transfer" } else { "send" };
                    let Some(site) = node.facts.calls.iter().find(|c| c.kind == kind) else { continue };
                    let w = pick_witness(Smell::Fgr, &paths, i);
                    let probe = a.probe_at(i, site.src, Some(vec![Opcode::Call]), &w);
                    let msg = format!("{prim}() relies on the 2300 gas stipend while `{var}` is updated afterwards");
                    let mut cand = a.candidate(Smell::Fgr, i, w, msg, probe);
                    cand.finding.metadata.insert("primitive".into(), prim.into());
                    cand.finding.metadata.insert("state_written_after".into(), var.into());
                    cand.finding.metadata.insert("write_line".into(), later.line.into());
                    out.push(cand);
                }
                Some(_) => diags.push(Diagnostic {
                    kind: "cei-violation-value-call".into(),
                    message: format!(
                        "{}: value-bearing call precedes a write to `{var}` (line {})",
                        a.function_name(i),
                        later.line
                    ),
                    location: Some(a.location(&node.src)),
                }),
                None => {}
            }
        }
    }
    (out, diags)
}
