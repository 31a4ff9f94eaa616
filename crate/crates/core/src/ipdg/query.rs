//! Queries over a built I-PDG.

use super::types::*;
use ruint::aliases::U256;
use std::collections::{BTreeMap, BTreeSet};

pub const PATH_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("more than {0} paths between the given nodes")]
    PathBudgetExceeded(usize),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Folds an expression to a constant using the given environment.
pub fn fold(e: &Expr, env: &BTreeMap<VarId, U256>) -> Option<U256> {
    match e {
        Expr::Lit(l) => l.value,
        Expr::Var(v) => env.get(v).copied(),
        Expr::Conv(ty, inner) => {
            let v = fold(inner, env)?;
            Some(truncate(ty, v))
        }
        Expr::Tuple(items) if items.len() == 1 => fold(items[0].as_ref()?, env),
        Expr::Binary(op, l, r) => {
            let a = fold(l, env)?;
            let b = fold(r, env)?;
            match op.as_str() {
                "+" => a.checked_add(b),
                "-" => a.checked_sub(b),
                "*" => a.checked_mul(b),
                "/" => a.checked_div(b),
                "%" => a.checked_rem(b),
                "**" => a.checked_pow(b),
                "<<" => usize::try_from(b).ok().filter(|s| *s < 256).map(|s| a << s),
                ">>" => usize::try_from(b).ok().filter(|s| *s < 256).map(|s| a >> s),
                "&" => Some(a & b),
                "|" => Some(a | b),
                "^" => Some(a ^ b),
                _ => None,
            }
        }
        _ => None,
    }
}

fn truncate(ty: &str, v: U256) -> U256 {
    let bits = if let Some(n) = ty.strip_prefix("uint") {
        n.parse::<usize>().unwrap_or(256)
    } else if ty.starts_with("address") {
        160
    } else {
        256
    };
    if bits >= 256 {
        v
    } else {
        v & ((U256::from(1u8) << bits) - U256::from(1u8))
    }
}

/// Compile-time values of constants, immutables and never-written literal state.
pub fn fold_constants(g: &Ipdg) -> BTreeMap<VarId, U256> {
    let mut writers: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
    for n in &g.nodes {
        if n.stmt_kind == StmtKind::StateVarDecl {
            continue;
        }
        for d in &n.facts.defs {
            if g.state_vars.contains_key(d) {
                writers.entry(d.as_str()).or_default().push(n.id);
            }
        }
    }
    let mut env: BTreeMap<VarId, U256> = BTreeMap::new();
    loop {
        let mut changed = false;
        for (v, &decl) in &g.state_vars {
            if env.contains_key(v) {
                continue;
            }
            let kind = g.vars.get(v).map(|i| i.kind);
            let ws = writers.get(v.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            let decl_value = g.node(decl).expr.as_ref().and_then(|e| fold(e, &env));
            let value = match kind {
                Some(VarKind::Constant) => decl_value,
                Some(VarKind::Immutable) => match (decl_value, ws) {
                    (Some(x), []) => Some(x),
                    (None, [w]) => assigned_value(g.node(*w), v, &env),
                    _ => None,
                },
                Some(VarKind::State) if ws.is_empty() => decl_value,
                _ => None,
            };
            if let Some(x) = value {
                env.insert(v.clone(), x);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    env
}

fn assigned_value(n: &IpdgNode, v: &str, env: &BTreeMap<VarId, U256>) -> Option<U256> {
    match n.expr.as_ref()? {
        Expr::Assign(op, l, r) if op == "=" && matches!(l.as_ref(), Expr::Var(x) if x == v) => fold(r, env),
        _ => None,
    }
}

impl Ipdg {
    /// Variables (by id) with a statically known value.
    pub fn constants_of(&self) -> &BTreeMap<VarId, U256> {
        &self.constants
    }

    /// All simple paths of at most `max_len` edges from any node in `from` to any node in `to`,
    /// in lexicographic order.
    pub fn paths_between(&self, from: &[NodeId], to: &[NodeId], max_len: usize) -> Result<Vec<Vec<NodeId>>, PathError> {
        let n = self.nodes.len() as NodeId;
        if let Some(bad) = from.iter().chain(to).find(|x| **x >= n) {
            return Err(PathError::UnknownNode(*bad));
        }
        let targets: BTreeSet<NodeId> = to.iter().copied().collect();
        let mut starts: Vec<NodeId> = from.to_vec();
        starts.sort_unstable();
        starts.dedup();
        let mut out = Vec::new();
        let mut on_path = vec![false; self.nodes.len()];
        for s in starts {
            let mut path = vec![s];
            on_path[s as usize] = true;
            self.dfs(&targets, max_len, &mut path, &mut on_path, &mut out)?;
            on_path[s as usize] = false;
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn dfs(
        &self,
        to: &BTreeSet<NodeId>,
        max_len: usize,
        path: &mut Vec<NodeId>,
        on: &mut [bool],
        out: &mut Vec<Vec<NodeId>>,
    ) -> Result<(), PathError> {
        let cur = *path.last().unwrap();
        if to.contains(&cur) {
            out.push(path.clone());
            if out.len() > PATH_BUDGET {
                return Err(PathError::PathBudgetExceeded(out.len()));
            }
            return Ok(());
        }
        if path.len() > max_len {
            return Ok(());
        }
        let mut next: Vec<NodeId> = self.outgoing(cur).map(|e| e.to).collect();
        next.sort_unstable();
        next.dedup();
        for s in next {
            if on[s as usize] {
                continue;
            }
            on[s as usize] = true;
            path.push(s);
            self.dfs(to, max_len, path, on, out)?;
            path.pop();
            on[s as usize] = false;
        }
        Ok(())
    }

    pub fn entry_of(&self, key: &str) -> Option<NodeId> {
        self.functions.get(key).map(|f| f.entry)
    }

    /// Nodes whose facts include a call with the given intrinsic or callee name.
    pub fn calls_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.facts.calls.iter().any(|c| c.name == name))
            .map(|n| n.id)
    }

    /// Deterministic JSON rendering: nodes by id and edges in sorted order.
    pub fn canonical_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "id": n.id,
                    "kind": format!("{:?}", n.stmt_kind),
                    "contract": n.contract,
                    "function": n.function,
                    "src": format!("{}:{}:{}", n.src.start, n.src.length, n.src.file.map_or(-1, |f| f as i64)),
                    "defs": n.facts.defs,
                    "uses": n.facts.uses,
                    "env": n.facts.env,
                    "calls": n.facts.calls.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                let (kind, var) = match &e.kind {
                    EdgeKind::Control => ("control", None),
                    EdgeKind::Data(v) => ("data", Some(v.clone())),
                    EdgeKind::Call => ("call", None),
                    EdgeKind::Return => ("return", None),
                };
                serde_json::json!({"from": e.from, "to": e.to, "kind": kind, "var": var})
            })
            .collect();
        serde_json::json!({
            "nodes": nodes,
            "edges": edges,
            "constants": self.constants.iter().map(|(k, v)| (k.clone(), v.to_string())).collect::<BTreeMap<_, _>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph ipdg {\n");
        for n in &self.nodes {
            s.push_str(&format!(
                "  n{} [label=\"{} {:?} {}\"];\n",
                n.id,
                n.id,
                n.stmt_kind,
                n.fn_key().replace('"', "'")
            ));
        }
        for e in &self.edges {
            let (style, label) = match &e.kind {
                EdgeKind::Control => ("solid", String::new()),
                EdgeKind::Data(v) => ("dashed", v.clone()),
                EdgeKind::Call => ("bold", "call".into()),
                EdgeKind::Return => ("dotted", "ret".into()),
            };
            s.push_str(&format!("  n{} -> n{} [style={style}, label=\"{label}\"];\n", e.from, e.to));
        }
        s.push_str("}\n");
        s
    }
}
