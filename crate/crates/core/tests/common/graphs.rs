use equivguard::artifact::SrcRange;
use equivguard::ipdg::{EdgeKind, EnvRead, Expr, Ipdg, IpdgEdge, IpdgNode, NodeFacts, StmtKind};
use equivguard::taint::{SinkPattern, SourcePattern, TaintSpec};
use equivguard::Smell;
use proptest::prelude::*;

fn node(id: u32, kind: StmtKind, uses: &[usize], env: bool, external: bool, opaque: bool) -> IpdgNode {
    let vars: Vec<String> = uses.iter().map(|u| format!("v{u}")).collect();
    let expr = match kind {
        StmtKind::If => {
            let mut e = if env { Expr::Env(EnvRead::Number) } else { Expr::Opaque(vec![]) };
            for v in &vars {
                e = Expr::Binary(">".into(), Box::new(e), Box::new(Expr::Var(v.clone())));
            }
            Some(e)
        }
        _ => None,
    };
    let mut facts = NodeFacts::default();
    facts.uses = vars.into_iter().collect();
    if env {
        facts.env.insert(EnvRead::Number);
    }
    if kind == StmtKind::FunctionEntry {
        facts.defs.insert("p".into());
    }
    IpdgNode {
        id,
        stmt_kind: kind,
        src: SrcRange::default(),
        contract: "G".into(),
        function: format!("f{}", id % 3),
        ast_id: id as i64,
        order: id,
        opaque,
        in_constructor: false,
        external_entry: external,
        facts,
        expr,
    }
}

pub fn arb_graph() -> impl Strategy<Value = Ipdg> {
    (2usize..40).prop_flat_map(|n| {
        let nodes = prop::collection::vec(
            (0u8..6, prop::collection::vec(0usize..4, 0..3), prop::bool::weighted(0.15), prop::bool::weighted(0.05)),
            n,
        );
        let edges = prop::collection::vec((0..n as u32, 0..n as u32, 0u8..7), 0..n * 3);
        (nodes, edges).prop_map(|(ns, es)| {
            let nodes: Vec<IpdgNode> = ns
                .into_iter()
                .enumerate()
                .map(|(i, (k, uses, env, opaque))| {
                    let kind = match k {
                        0 => StmtKind::FunctionEntry,
                        1 | 2 => StmtKind::If,
                        3 => StmtKind::FunctionExit,
                        _ => StmtKind::Assignment,
                    };
                    node(i as u32, kind, &uses, env, k == 0, opaque)
                })
                .collect();
            let edges: Vec<IpdgEdge> = es
                .into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(from, to, k)| IpdgEdge {
                    from,
                    to,
                    kind: match k {
                        0..=3 => EdgeKind::Data(format!("v{k}")),
                        4 => EdgeKind::Call,
                        5 => EdgeKind::Return,
                        _ => EdgeKind::Control,
                    },
                })
                .collect();
            Ipdg::from_parts(nodes, edges)
        })
    })
}

pub fn random_spec() -> TaintSpec {
    TaintSpec::new(
        Smell::Tdt,
        vec![SourcePattern::ExternalParam, SourcePattern::Env(EnvRead::Number)],
        vec![SinkPattern::BranchCondition],
        vec![],
    )
}
