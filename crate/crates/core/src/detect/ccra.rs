use super::{pick_witness, Analysis, Candidate, Diagnostic};
use crate::evm::Opcode;
use crate::ipdg::{fold, CallKind, EnvRead, Expr, Ipdg, LitKind, NodeId, StmtKind, VarId, VarKind};
use crate::symexec::PathCheck;
use crate::taint::{backward_slice, reverse_search, sanitizer_hit, sink_matches, SanitizerPattern, SinkPattern, TaintSpec};
use crate::Smell;
use regex::Regex;
use ruint::aliases::U256;
use serde_json::json;
use std::collections::BTreeSet;
use std::sync::OnceLock;

const DOMAIN_PREFIX: &str = "EIP712Domain(";

/// Field names of an `EIP712Domain(...)` type string.
pub(crate) fn domain_fields(ty: &str) -> Option<Vec<String>> {
    let inner = ty.strip_prefix(DOMAIN_PREFIX)?.strip_suffix(')')?;
    Some(
        inner
            .split(',')
            .filter_map(|f| f.split_whitespace().last())
            .map(str::to_string)
            .collect(),
    )
}

/// Domain type string reachable from `e`, looking through constant declarations.
fn domain_type(g: &Ipdg, e: &Expr, depth: u32) -> Option<String> {
    let mut found = None;
    e.walk(&mut |x| {
        if let Expr::Lit(l) = x {
            if l.kind == LitKind::Str && l.text.starts_with(DOMAIN_PREFIX) && found.is_none() {
                found = Some(l.text.clone());
            }
        }
    });
    if found.is_some() || depth == 0 {
        return found;
    }
    e.vars().iter().find_map(|v| {
        let decl = g.vars.get(v)?.decl_node?;
        let init = g.node(decl).expr.as_ref()?;
        (g.node(decl).stmt_kind == StmtKind::StateVarDecl)
            .then(|| domain_type(g, init, depth - 1))
            .flatten()
    })
}

/// Right-hand side that node `n` assigns to `v`.
fn def_value<'g>(g: &'g Ipdg, n: NodeId, v: &str) -> Option<&'g Expr> {
    let node = g.node(n);
    match node.expr.as_ref()? {
        Expr::Assign(op, lhs, rhs) if op == "=" && lhs.base_var().map(String::as_str) == Some(v) => Some(rhs),
        e if g.vars.get(v).and_then(|i| i.decl_node) == Some(n) => Some(e),
        _ => None,
    }
}

fn writers<'g>(g: &'g Ipdg, v: &'g str) -> impl Iterator<Item = NodeId> + 'g {
    g.nodes
        .iter()
        .filter(move |n| n.facts.defs.contains(v))
        .filter(move |n| !(n.stmt_kind == StmtKind::StateVarDecl && n.expr.is_none()))
        .map(|n| n.id)
}

/// Constant value of `e`, following single definitions of locals and state.
fn resolve_const(g: &Ipdg, e: &Expr, depth: u32) -> Option<U256> {
    if let Some(v) = fold(e, g.constants_of()) {
        return Some(v);
    }
    let Expr::Var(v) = e.peel() else { return None };
    if depth == 0 {
        return None;
    }
    let defs: Vec<NodeId> = writers(g, v).collect();
    let [d] = defs.as_slice() else { return None };
    resolve_const(g, def_value(g, *d, v)?, depth - 1)
}

/// Chain-id arguments of domain encodings within the slice.
fn domain_chain_args(g: &Ipdg, slice: &BTreeSet<NodeId>) -> (bool, Vec<Expr>) {
    let mut saw_domain = false;
    let mut out = Vec::new();
    for &n in slice {
        let Some(e) = &g.node(n).expr else { continue };
        e.walk(&mut |x| {
            let Expr::Call(c) = x else { return };
            if c.kind != CallKind::Intrinsic || c.name != "abi.encode" || c.args.is_empty() {
                return;
            }
            let Some(ty) = domain_type(g, &c.args[0], 2) else { return };
            saw_domain = true;
            let Some(fields) = domain_fields(&ty) else { return };
            if let Some(i) = fields.iter().position(|f| f.eq_ignore_ascii_case("chainid")) {
                if let Some(arg) = c.args.get(i + 1) {
                    out.push(arg.clone());
                }
            }
        });
    }
    (saw_domain, out)
}

fn short(v: &VarId) -> &str {
    v.rsplit('.').next().unwrap_or(v)
}

/// State variable feeding the chain id that some non-constructor code rewrites.
fn writable_chain_var(g: &Ipdg, args: &[Expr]) -> Option<(VarId, NodeId)> {
    for a in args {
        for v in a.vars() {
            if g.vars.get(&v).is_none_or(|i| i.kind != VarKind::State) {
                continue;
            }
            let w = writers(g, &v).find(|w| !g.node(*w).in_constructor);
            if let Some(w) = w {
                return Some((v, w));
            }
        }
    }
    None
}

fn asm_recover_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"staticcall\s*\([^,]+,\s*(0x0*)?1\s*,").unwrap())
}

pub fn detect_ccra(a: &Analysis) -> (Vec<Candidate>, Vec<Diagnostic>) {
    let g = &a.ipdg;
    let paths = reverse_search(g, &TaintSpec::for_smell(Smell::Ccra));
    let sink = SinkPattern::Intrinsic {
        name: "ecrecover".into(),
        arg: Some(0),
    };
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for node in &g.nodes {
        if !a.is_analyzed(node.id) {
            continue;
        }
        if node.opaque {
            if a.text(&node.src).is_some_and(|t| asm_recover_re().is_match(t)) {
                diags.push(Diagnostic {
                    kind: "assembly-ecrecover".into(),
                    message: format!("{}: signature recovery in inline assembly is not analyzed", a.function_name(node.id)),
                    location: Some(a.location(&node.src)),
                });
            }
            continue;
        }
        let Some(rel) = sink_matches(node, &sink) else { continue };
        let n = node.id;
        let slice = backward_slice(g, n, &rel);
        let reads_chain = |m: &NodeId| g.node(*m).facts.env.contains(&EnvRead::ChainId);
        let call_time = slice.iter().any(|m| reads_chain(m) && !g.node(*m).in_constructor);
        let captured = slice.iter().any(|m| {
            reads_chain(m)
                && g.node(*m).in_constructor
                && g.node(*m)
                    .facts
                    .defs
                    .iter()
                    .any(|d| g.vars.get(d).is_some_and(|i| i.kind == VarKind::Immutable))
        });
        let guarded = sanitizer_hit(g, &[n], &SanitizerPattern::RequireOnEnv(EnvRead::ChainId)).is_some();
        if call_time || captured || guarded {
            continue;
        }
        let (saw_domain, chain_args) = domain_chain_args(g, &slice);
        let hardcoded = chain_args.iter().find_map(|e| resolve_const(g, e, 4));
        let w = pick_witness(Smell::Ccra, &paths, n);
        let Some(site) = node.facts.calls.iter().find(|c| c.name == "ecrecover") else { continue };
        let mut probe = a.probe_at(n, site.src, Some(vec![Opcode::Staticcall]), &w);
        probe.required.push(PathCheck::ChainIdSolvable);
        probe.recorded.push(PathCheck::CallerPermission);
        let (reason, extra) = if let Some(id) = hardcoded {
            (format!("binds the hardcoded chain id {id}"), vec![("hardcoded_chainid", json!(u64::try_from(id).unwrap_or(u64::MAX)))])
        } else if let Some((v, wr)) = writable_chain_var(g, &chain_args) {
            (
                format!("takes its chain id from `{}`, writable in {}()", short(&v), a.function_name(wr)),
                vec![("chainid_variable", json!(short(&v))), ("writer", json!(a.function_name(wr)))],
            )
        } else if chain_args.is_empty() {
            let why = if saw_domain { "has a domain without a chainId field" } else { "binds no chain id" };
            (why.to_string(), vec![])
        } else {
            ("uses a chain id that is not read from the executing chain".to_string(), vec![])
        };
        let msg = format!("ecrecover digest {reason}");
        let mut cand = a.candidate(Smell::Ccra, n, w, msg, probe);
        for (k, v) in extra {
            cand.finding.metadata.insert(k.into(), v);
        }
        out.push(cand);
    }
    (out, diags)
}
