use crate::ipdg::{CallKind, EnvRead, Expr, Ipdg, IpdgNode, LitKind, NodeId, StmtKind, VarId};
use crate::Smell;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_DEPTH: usize = 64;
pub const DEFAULT_PATH_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LitClass {
    /// 20-byte address other than zero and the precompiles 0x01..=0x09.
    Address,
    /// Any numeric literal.
    Number,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourcePattern {
    /// Entry of a public or external function that takes parameters.
    ExternalParam,
    Env(EnvRead),
    Literal(LitClass),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SinkPattern {
    /// Call to a builtin; `arg` restricts the tainted operand.
    Intrinsic { name: String, arg: Option<usize> },
    TransferOrSend,
    /// External or low-level call; the target address is the tainted operand.
    ExternalCallTarget,
    BranchCondition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SanitizerPattern {
    /// Some node on the path reads the environment value or depends on a node that does.
    PathReadsEnv(EnvRead),
    /// A require over the environment value precedes a path node in its function.
    RequireOnEnv(EnvRead),
    /// The sink's function checks the target has code before calling it.
    CodeExistenceGuard,
}

impl SanitizerPattern {
    pub fn id(&self) -> String {
        match self {
            SanitizerPattern::PathReadsEnv(e) => format!("path-reads-{e:?}").to_lowercase(),
            SanitizerPattern::RequireOnEnv(e) => format!("require-on-{e:?}").to_lowercase(),
            SanitizerPattern::CodeExistenceGuard => "code-existence-guard".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintSpec {
    pub smell: Smell,
    pub sources: Vec<SourcePattern>,
    pub sinks: Vec<SinkPattern>,
    pub sanitizers: Vec<SanitizerPattern>,
    pub depth: usize,
    pub path_cap: usize,
}

impl TaintSpec {
    pub fn new(smell: Smell, sources: Vec<SourcePattern>, sinks: Vec<SinkPattern>, sanitizers: Vec<SanitizerPattern>) -> TaintSpec {
        TaintSpec {
            smell,
            sources,
            sinks,
            sanitizers,
            depth: DEFAULT_DEPTH,
            path_cap: DEFAULT_PATH_CAP,
        }
    }

    /// Default pattern set per smell.
    pub fn for_smell(smell: Smell) -> TaintSpec {
        use SanitizerPattern as Z;
        use SinkPattern as K;
        use SourcePattern as S;
        match smell {
            Smell::Ccra => TaintSpec::new(
                smell,
                vec![S::ExternalParam, S::Literal(LitClass::Number)],
                vec![K::Intrinsic { name: "ecrecover".into(), arg: Some(0) }],
                vec![Z::PathReadsEnv(EnvRead::ChainId), Z::RequireOnEnv(EnvRead::ChainId)],
            ),
            Smell::Tdt | Smell::Bhm => TaintSpec::new(smell, vec![S::Env(EnvRead::Number)], vec![K::BranchCondition], vec![]),
            Smell::Pca => TaintSpec::new(
                smell,
                vec![S::Literal(LitClass::Address), S::ExternalParam],
                vec![K::ExternalCallTarget],
                vec![Z::CodeExistenceGuard],
            ),
            Smell::Gli => TaintSpec::new(smell, vec![S::Env(EnvRead::GasLeft)], vec![K::BranchCondition], vec![]),
            Smell::Fgr => TaintSpec::new(
                smell,
                vec![S::ExternalParam, S::Env(EnvRead::Sender)],
                vec![K::TransferOrSend],
                vec![],
            ),
        }
    }
}

pub fn is_precompile_or_zero(v: U256) -> bool {
    v <= U256::from(9u8)
}

pub fn source_matches(node: &IpdgNode, p: &SourcePattern) -> bool {
    match p {
        SourcePattern::ExternalParam => {
            node.stmt_kind == StmtKind::FunctionEntry && node.external_entry && !node.facts.defs.is_empty()
        }
        SourcePattern::Env(e) => node.facts.env.contains(e),
        SourcePattern::Literal(LitClass::Address) => node.facts.literals.iter().any(|l| {
            l.kind == LitKind::Address && l.value.is_some_and(|v| !is_precompile_or_zero(v))
        }),
        SourcePattern::Literal(LitClass::Number) => node.facts.literals.iter().any(|l| l.kind == LitKind::Number),
    }
}

pub fn is_source(node: &IpdgNode, spec: &TaintSpec) -> bool {
    spec.sources.iter().any(|p| source_matches(node, p))
}

/// Which incoming flows matter at a node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Relevance {
    pub all: bool,
    pub vars: BTreeSet<VarId>,
    pub callees: BTreeSet<String>,
}

impl Relevance {
    pub fn all() -> Relevance {
        Relevance {
            all: true,
            ..Default::default()
        }
    }

    fn of_expr(node: &IpdgNode, e: &Expr) -> Relevance {
        let mut ids = BTreeSet::new();
        e.walk(&mut |x| {
            if let Expr::Call(c) = x {
                ids.insert(c.ast_id);
            }
        });
        let callees = node
            .facts
            .calls
            .iter()
            .filter(|c| ids.contains(&c.ast_id))
            .filter_map(|c| c.callee.clone())
            .collect();
        Relevance {
            all: false,
            vars: e.vars(),
            callees,
        }
    }

    pub fn allows_var(&self, v: &str) -> bool {
        self.all || self.vars.contains(v)
    }

    pub fn allows_callee(&self, key: &str) -> bool {
        self.all || self.callees.contains(key)
    }

    fn union(mut self, o: Relevance) -> Relevance {
        self.all |= o.all;
        self.vars.extend(o.vars);
        self.callees.extend(o.callees);
        self
    }
}

/// Relevance at `node` if it matches `p` as a sink.
pub fn sink_matches(node: &IpdgNode, p: &SinkPattern) -> Option<Relevance> {
    let mut rel: Option<Relevance> = None;
    let mut add = |r: Relevance| rel = Some(match rel.take() {
        Some(x) => x.union(r),
        None => r,
    });
    match p {
        SinkPattern::BranchCondition => {
            if matches!(node.stmt_kind, StmtKind::If | StmtKind::Loop | StmtKind::Require) {
                if let Some(e) = &node.expr {
                    add(Relevance::of_expr(node, e));
                }
            }
        }
        _ => {
            let Some(e) = &node.expr else { return None };
            let mut sites = Vec::new();
            e.walk(&mut |x| {
                if let Expr::Call(c) = x {
                    sites.push(c);
                }
            });
            for c in sites {
                match (p, &c.kind) {
                    (SinkPattern::Intrinsic { name, arg }, CallKind::Intrinsic) if &c.name == name => match arg {
                        Some(i) => {
                            if let Some(a) = c.args.get(*i) {
                                add(Relevance::of_expr(node, a));
                            }
                        }
                        None => add(Relevance::of_expr(node, &Expr::Opaque(c.args.clone()))),
                    },
                    (SinkPattern::TransferOrSend, CallKind::Transfer | CallKind::Send) => {
                        let mut parts = c.args.clone();
                        parts.extend(c.target.as_deref().cloned());
                        add(Relevance::of_expr(node, &Expr::Opaque(parts)));
                    }
                    (SinkPattern::ExternalCallTarget, CallKind::External { .. } | CallKind::LowLevel { .. }) => {
                        if let Some(t) = &c.target {
                            add(Relevance::of_expr(node, t));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    rel
}

pub fn sink_relevance(node: &IpdgNode, spec: &TaintSpec) -> Option<Relevance> {
    spec.sinks
        .iter()
        .filter_map(|p| sink_matches(node, p))
        .reduce(Relevance::union)
}

fn has_code_check(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| match x {
        Expr::Member(b, m) if m == "length" => {
            if matches!(b.as_ref(), Expr::Member(_, c) if c == "code") {
                found = true;
            }
        }
        Expr::Call(c) if c.name == "extcodesize" => found = true,
        _ => {}
    });
    found
}

/// Evaluates one sanitizer over a path; returns the witnessing node.
pub fn sanitizer_hit(g: &Ipdg, path: &[NodeId], z: &SanitizerPattern) -> Option<NodeId> {
    match z {
        SanitizerPattern::PathReadsEnv(e) => {
            if let Some(n) = path.iter().copied().find(|n| g.node(*n).facts.env.contains(e)) {
                return Some(n);
            }
            let all = Relevance::all();
            let inner = &path[..path.len().saturating_sub(1)];
            inner
                .iter()
                .flat_map(|&n| crate::taint::backward_slice(g, n, &all))
                .find(|n| g.node(*n).facts.env.contains(e))
        }
        SanitizerPattern::RequireOnEnv(e) => {
            for &p in path {
                let pn = g.node(p);
                let Some(f) = g.function_of(p) else { continue };
                for &r in &f.body {
                    let rn = g.node(r);
                    if rn.stmt_kind == StmtKind::Require && rn.order <= pn.order && rn.facts.env.contains(e) {
                        return Some(r);
                    }
                }
            }
            None
        }
        SanitizerPattern::CodeExistenceGuard => {
            let sink = *path.last()?;
            let f = g.function_of(sink)?;
            f.body.iter().copied().find(|&r| {
                let rn = g.node(r);
                matches!(rn.stmt_kind, StmtKind::Require | StmtKind::If)
                    && rn.order <= g.node(sink).order
                    && rn.expr.as_ref().is_some_and(has_code_check)
            })
        }
    }
}
