//! I-PDG construction from compiler ASTs.

use super::types::*;
use crate::artifact::ast::is_builtin_ref;
use crate::artifact::literal::parse_number;
use crate::artifact::{AstKind, AstNode, CompilationArtifact, SrcRange};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

struct Index<'a> {
    by_id: HashMap<i64, &'a AstNode>,
    /// declaration id -> enclosing contract id
    contract_of: HashMap<i64, i64>,
    /// variable declaration id -> enclosing function or modifier id
    owner_fn: HashMap<i64, i64>,
}

impl<'a> Index<'a> {
    fn new(roots: &[&'a AstNode]) -> Index<'a> {
        let mut idx = Index {
            by_id: HashMap::new(),
            contract_of: HashMap::new(),
            owner_fn: HashMap::new(),
        };
        for r in roots {
            idx.visit(r, None, None);
        }
        idx
    }

    fn visit(&mut self, n: &'a AstNode, contract: Option<i64>, func: Option<i64>) {
        if n.id >= 0 {
            self.by_id.entry(n.id).or_insert(n);
        }
        let contract = if n.kind == AstKind::ContractDefinition { Some(n.id) } else { contract };
        if let Some(c) = contract {
            if n.kind != AstKind::ContractDefinition {
                self.contract_of.entry(n.id).or_insert(c);
            }
        }
        let func = if matches!(n.kind, AstKind::FunctionDefinition | AstKind::ModifierDefinition) {
            Some(n.id)
        } else {
            func
        };
        if n.kind == AstKind::VariableDecl {
            if let Some(f) = func {
                self.owner_fn.entry(n.id).or_insert(f);
            }
        }
        for c in &n.children {
            self.visit(c, contract, func);
        }
    }

    fn get(&self, id: i64) -> Option<&'a AstNode> {
        self.by_id.get(&id).copied()
    }

    fn name_of(&self, id: i64) -> String {
        self.get(id).and_then(|n| n.name()).unwrap_or("?").to_string()
    }

    fn linearization(&self, contract: i64) -> Vec<i64> {
        match self.get(contract) {
            Some(c) if !c.int_list("linearizedBaseContracts").is_empty() => c.int_list("linearizedBaseContracts").to_vec(),
            _ => vec![contract],
        }
    }

    fn contract_kind(&self, contract: i64) -> &str {
        self.get(contract).and_then(|c| c.str_attr("contractKind")).unwrap_or("contract")
    }

    fn functions_of(&self, contract: i64) -> Vec<&'a AstNode> {
        self.get(contract)
            .map(|c| c.children.iter().filter(|n| n.kind == AstKind::FunctionDefinition).collect())
            .unwrap_or_default()
    }

    fn is_implemented(f: &AstNode) -> bool {
        f.child("body").is_some()
    }

    fn param_count(f: &AstNode) -> usize {
        f.child("parameters").map_or(0, |p| p.list("parameters").len())
    }

    fn fn_kind(f: &AstNode) -> &str {
        f.str_attr("kind").unwrap_or("function")
    }

    /// Most-derived implementation in `ctx` of the function declared as `decl`.
    fn dispatch(&self, ctx: i64, decl: i64) -> Option<i64> {
        let d = self.get(decl)?;
        let name = d.name().unwrap_or("");
        let arity = Self::param_count(d);
        let kind = Self::fn_kind(d);
        for c in self.linearization(ctx) {
            for f in self.functions_of(c) {
                if Self::is_implemented(f)
                    && f.name().unwrap_or("") == name
                    && Self::param_count(f) == arity
                    && Self::fn_kind(f) == kind
                {
                    return Some(f.id);
                }
            }
        }
        Self::is_implemented(d).then_some(decl)
    }

    fn modifier_dispatch(&self, ctx: i64, decl: i64) -> Option<i64> {
        let name = self.get(decl)?.name()?.to_string();
        for c in self.linearization(ctx) {
            if let Some(cn) = self.get(c) {
                for m in &cn.children {
                    if m.kind == AstKind::ModifierDefinition && m.name() == Some(name.as_str()) && m.child("body").is_some() {
                        return Some(m.id);
                    }
                }
            }
        }
        Some(decl)
    }
}

type Reach = BTreeMap<VarId, BTreeSet<NodeId>>;

/// Statement structure retained for the reaching-definition pass.
enum SNode {
    Simple(NodeId),
    If { cond: NodeId, then: Vec<SNode>, other: Vec<SNode> },
    Loop { cond: NodeId, body: Vec<SNode> },
}

struct FnCtx {
    ctx: i64,
    ctx_name: String,
    fname: String,
    is_ctor: bool,
    order: u32,
    mods: Vec<i64>,
    body: Option<i64>,
    placeholder: Vec<usize>,
    nodes: Vec<NodeId>,
}

struct Builder<'a> {
    idx: Index<'a>,
    g: Ipdg,
    queue: VecDeque<(i64, i64)>,
    built: BTreeMap<(i64, i64), String>,
    state_done: BTreeSet<i64>,
    sinks: BTreeMap<String, NodeId>,
    /// (node, call index, ctx) awaiting edge wiring
    pending_calls: Vec<(NodeId, usize, i64, bool)>,
}

pub fn build_ipdg(artifacts: &[CompilationArtifact]) -> Ipdg {
    let mut roots: Vec<&Arc<AstNode>> = Vec::new();
    for a in artifacts {
        if !roots.iter().any(|r| Arc::ptr_eq(r, &a.ast_root)) {
            roots.push(&a.ast_root);
        }
    }
    let root_refs: Vec<&AstNode> = roots.iter().map(|r| r.as_ref()).collect();
    let mut b = Builder {
        idx: Index::new(&root_refs),
        g: Ipdg::default(),
        queue: VecDeque::new(),
        built: BTreeMap::new(),
        state_done: BTreeSet::new(),
        sinks: BTreeMap::new(),
        pending_calls: Vec::new(),
    };
    for a in artifacts {
        b.add_context(a.contract_id);
    }
    b.drain();
    b.wire_calls();
    b.state_edges();
    b.anti_deps();
    b.g.constants = super::query::fold_constants(&b.g);
    b.g.index();
    b.g
}

/// Builds a graph for every concrete contract found in the given ASTs.
pub fn build_from_ast(roots: &[&AstNode], contract_ids: &[i64]) -> Ipdg {
    let mut b = Builder {
        idx: Index::new(roots),
        g: Ipdg::default(),
        queue: VecDeque::new(),
        built: BTreeMap::new(),
        state_done: BTreeSet::new(),
        sinks: BTreeMap::new(),
        pending_calls: Vec::new(),
    };
    for c in contract_ids {
        b.add_context(*c);
    }
    b.drain();
    b.wire_calls();
    b.state_edges();
    b.anti_deps();
    b.g.constants = super::query::fold_constants(&b.g);
    b.g.index();
    b.g
}

impl<'a> Builder<'a> {
    fn new_node(&mut self, kind: StmtKind, src: SrcRange, contract: &str, function: &str, ast_id: i64) -> NodeId {
        let id = self.g.nodes.len() as NodeId;
        self.g.nodes.push(IpdgNode {
            id,
            stmt_kind: kind,
            src,
            contract: contract.to_string(),
            function: function.to_string(),
            ast_id,
            order: 0,
            opaque: false,
            in_constructor: false,
            external_entry: false,
            facts: NodeFacts::default(),
            expr: None,
        });
        id
    }

    fn edge(&mut self, from: NodeId, to: NodeId, kind: EdgeKind) {
        if from != to || kind == EdgeKind::Control {
            self.g.edges.insert(IpdgEdge { from, to, kind });
        }
    }

    fn add_context(&mut self, ctx: i64) {
        self.ensure_state(ctx);
        for c in self.idx.linearization(ctx) {
            for f in self.idx.functions_of(c) {
                if !Index::is_implemented(f) {
                    continue;
                }
                let is_ctor = Index::fn_kind(f) == "constructor";
                if is_ctor || self.idx.dispatch(ctx, f.id) == Some(f.id) {
                    self.enqueue(ctx, f.id);
                }
            }
        }
    }

    fn enqueue(&mut self, ctx: i64, def: i64) -> String {
        if let Some(k) = self.built.get(&(ctx, def)) {
            return k.clone();
        }
        let key = format!("{}.{}", self.idx.name_of(ctx), self.fn_name(ctx, def));
        self.built.insert((ctx, def), key.clone());
        self.queue.push_back((ctx, def));
        key
    }

    fn fn_name(&self, ctx: i64, def: i64) -> String {
        let Some(f) = self.idx.get(def) else {
            return format!("fn{def}");
        };
        let kind = Index::fn_kind(f);
        let base = match kind {
            "constructor" | "fallback" | "receive" => kind.to_string(),
            _ => f.name().unwrap_or("?").to_string(),
        };
        let declaring = self.idx.contract_of.get(&def).copied().unwrap_or(ctx);
        let most_derived = if kind == "constructor" {
            declaring == ctx
        } else {
            self.idx.dispatch(ctx, def) == Some(def)
        };
        let mut name = if most_derived {
            base
        } else {
            format!("{base}@{}", self.idx.name_of(declaring))
        };
        // overloads share a name; disambiguate by arity
        let overloads = self
            .idx
            .linearization(ctx)
            .into_iter()
            .flat_map(|c| self.idx.functions_of(c))
            .filter(|g| g.name() == f.name() && Index::fn_kind(g) == kind && Index::param_count(g) != Index::param_count(f))
            .count();
        if overloads > 0 {
            name = format!("{name}/{}", Index::param_count(f));
        }
        name
    }

    fn drain(&mut self) {
        while let Some((ctx, def)) = self.queue.pop_front() {
            self.build_function(ctx, def);
        }
    }

    fn state_var_id(&self, ctx: i64, decl: &AstNode) -> VarId {
        let declaring = self.idx.contract_of.get(&decl.id).copied();
        let name = decl.name().unwrap_or("?");
        let constant = decl.bool_attr("constant") || decl.str_attr("mutability") == Some("constant");
        match declaring {
            None => format!("<global>.{name}"),
            Some(d) if constant => format!("{}.{name}", self.idx.name_of(d)),
            Some(d) => {
                if self.idx.linearization(ctx).contains(&d) {
                    format!("{}.{name}", self.idx.name_of(ctx))
                } else {
                    format!("{}.{name}", self.idx.name_of(d))
                }
            }
        }
    }

    fn ensure_state(&mut self, ctx: i64) {
        if !self.state_done.insert(ctx) {
            return;
        }
        let mut lin = self.idx.linearization(ctx);
        lin.reverse();
        for c in lin {
            let Some(cn) = self.idx.get(c) else { continue };
            for v in cn.children.iter().filter(|n| n.kind == AstKind::VariableDecl && n.bool_attr("stateVariable")) {
                self.declare_state(ctx, v);
            }
        }
    }

    fn declare_state(&mut self, ctx: i64, v: &'a AstNode) -> VarId {
        let id = self.state_var_id(ctx, v);
        if self.g.state_vars.contains_key(&id) {
            return id;
        }
        let kind = if v.bool_attr("constant") || v.str_attr("mutability") == Some("constant") {
            VarKind::Constant
        } else if v.str_attr("mutability") == Some("immutable") {
            VarKind::Immutable
        } else {
            VarKind::State
        };
        let owner = id.rsplit_once('.').map(|(c, _)| c.to_string()).unwrap_or_default();
        let n = self.new_node(StmtKind::StateVarDecl, v.src, &owner, "<global>", v.id);
        self.g.state_vars.insert(id.clone(), n);
        self.g.vars.insert(
            id.clone(),
            VarInfo {
                kind,
                type_string: v.type_string().unwrap_or("").to_string(),
                decl_node: Some(n),
            },
        );
        let fctx = FnCtx {
            ctx,
            ctx_name: self.idx.name_of(ctx),
            fname: "<global>".into(),
            is_ctor: true,
            order: 0,
            mods: vec![],
            body: None,
            placeholder: vec![],
            nodes: vec![],
        };
        let init = v.child("value").map(|e| self.expr(e, &fctx));
        let mut facts = NodeFacts::default();
        facts.defs.insert(id.clone());
        if let Some(e) = &init {
            collect_facts(e, &mut facts);
        }
        let node = &mut self.g.nodes[n as usize];
        node.facts = facts;
        node.expr = init;
        node.in_constructor = true;
        self.register_calls(n, ctx);
        id
    }

    fn local_var_id(&self, decl: &AstNode, f: &FnCtx) -> VarId {
        let name = decl.name().unwrap_or("?");
        match self.idx.owner_fn.get(&decl.id).and_then(|o| self.idx.get(*o)) {
            Some(owner) if owner.kind == AstKind::ModifierDefinition => {
                format!("{}.{}.{}.{name}", f.ctx_name, f.fname, owner.name().unwrap_or("?"))
            }
            _ => format!("{}.{}.{name}", f.ctx_name, f.fname),
        }
    }

    fn declare_local(&mut self, decl: &AstNode, f: &FnCtx, kind: VarKind, decl_node: Option<NodeId>) -> VarId {
        let id = self.local_var_id(decl, f);
        self.g.vars.entry(id.clone()).or_insert(VarInfo {
            kind,
            type_string: decl.type_string().unwrap_or("").to_string(),
            decl_node,
        });
        id
    }

    fn var_ref(&mut self, decl: &'a AstNode, f: &FnCtx) -> VarId {
        if decl.bool_attr("stateVariable") || !self.idx.owner_fn.contains_key(&decl.id) {
            let id = self.state_var_id(f.ctx, decl);
            if !self.g.state_vars.contains_key(&id) {
                // constant from a library or another contract
                return self.declare_state(f.ctx, decl);
            }
            return id;
        }
        let id = self.local_var_id(decl, f);
        if !self.g.vars.contains_key(&id) {
            self.declare_local(decl, f, VarKind::Local, None);
        }
        id
    }

    // ---- expressions ----

    fn expr(&mut self, n: &'a AstNode, f: &FnCtx) -> Expr {
        match &n.kind {
            AstKind::Identifier => {
                let name = n.name().unwrap_or("");
                let r = n.referenced().unwrap_or(0);
                if is_builtin_ref(r) || n.referenced().is_none() {
                    return match name {
                        "this" => Expr::Env(EnvRead::This),
                        "now" => Expr::Env(EnvRead::Timestamp),
                        _ => Expr::Opaque(vec![]),
                    };
                }
                match self.idx.get(r) {
                    Some(d) if d.kind == AstKind::VariableDecl => Expr::Var(self.var_ref(d, f)),
                    _ => Expr::Opaque(vec![]),
                }
            }
            AstKind::MemberAccess => {
                let base = n.child("expression");
                let member = n.str_attr("memberName").unwrap_or("").to_string();
                if let Some(b) = base {
                    if b.kind == AstKind::Identifier && b.referenced().is_some_and(is_builtin_ref) {
                        if let Some(env) = EnvRead::from_member(b.name().unwrap_or(""), &member) {
                            return Expr::Env(env);
                        }
                    }
                }
                if let Some(d) = n.referenced().and_then(|r| self.idx.get(r)) {
                    if d.kind == AstKind::VariableDecl {
                        return Expr::Var(self.var_ref(d, f));
                    }
                }
                let be = base.map(|b| self.expr(b, f)).unwrap_or(Expr::Opaque(vec![]));
                if member == "balance" {
                    if let Expr::Conv(_, inner) = &be {
                        if **inner == Expr::Env(EnvRead::This) {
                            return Expr::Env(EnvRead::Balance);
                        }
                    }
                }
                Expr::Member(Box::new(be), member)
            }
            AstKind::IndexAccess | AstKind::IndexRangeAccess => {
                let b = n.child("baseExpression").map(|b| self.expr(b, f)).unwrap_or(Expr::Opaque(vec![]));
                let i = n.child("indexExpression").map(|i| Box::new(self.expr(i, f)));
                Expr::Index(Box::new(b), i)
            }
            AstKind::Literal => Expr::Lit(literal(n)),
            AstKind::BinaryOperation => {
                let l = self.sub(n, "leftExpression", f);
                let r = self.sub(n, "rightExpression", f);
                Expr::Binary(n.str_attr("operator").unwrap_or("?").to_string(), Box::new(l), Box::new(r))
            }
            AstKind::UnaryOperation => {
                let e = self.sub(n, "subExpression", f);
                Expr::Unary(n.str_attr("operator").unwrap_or("?").to_string(), Box::new(e))
            }
            AstKind::Assignment => {
                let l = self.sub(n, "leftHandSide", f);
                let r = self.sub(n, "rightHandSide", f);
                Expr::Assign(n.str_attr("operator").unwrap_or("=").to_string(), Box::new(l), Box::new(r))
            }
            AstKind::TupleExpression => {
                let comps = n.list("components");
                let len = comps.iter().filter_map(|c| c.index).max().map_or(0, |m| m + 1);
                let mut items: Vec<Option<Expr>> = vec![None; len];
                for c in comps {
                    if let Some(i) = c.index {
                        items[i] = Some(self.expr(c, f));
                    }
                }
                Expr::Tuple(items)
            }
            AstKind::Conditional => {
                let c = self.sub(n, "condition", f);
                let t = self.sub(n, "trueExpression", f);
                let e = self.sub(n, "falseExpression", f);
                Expr::Cond(Box::new(c), Box::new(t), Box::new(e))
            }
            AstKind::FunctionCall | AstKind::Require => self.call(n, f),
            AstKind::FunctionCallOptions => self.sub(n, "expression", f),
            _ => {
                let kids: Vec<Expr> = n
                    .children
                    .iter()
                    .filter(|c| c.kind != AstKind::TypeName)
                    .map(|c| self.expr(c, f))
                    .collect();
                Expr::Opaque(kids)
            }
        }
    }

    fn sub(&mut self, n: &'a AstNode, role: &str, f: &FnCtx) -> Expr {
        n.child(role).map(|c| self.expr(c, f)).unwrap_or(Expr::Opaque(vec![]))
    }

    fn call(&mut self, n: &'a AstNode, f: &FnCtx) -> Expr {
        let args: Vec<&'a AstNode> = n.list("arguments");
        let call_kind = n.str_attr("kind").unwrap_or("functionCall");
        if call_kind == "typeConversion" {
            let ty = n.type_string().unwrap_or("").to_string();
            let inner = args.first().map(|a| self.expr(a, f)).unwrap_or(Expr::Opaque(vec![]));
            return Expr::Conv(ty, Box::new(inner));
        }
        let arg_exprs: Vec<Expr> = args.iter().map(|a| self.expr(a, f)).collect();
        if call_kind == "structConstructorCall" {
            return Expr::Opaque(arg_exprs);
        }
        let Some(mut callee) = n.child("expression") else {
            return Expr::Opaque(arg_exprs);
        };
        let mut value = None;
        if callee.kind == AstKind::FunctionCallOptions {
            let names = callee.str_list("names").to_vec();
            for (i, o) in callee.list("options").into_iter().enumerate() {
                if names.get(i).map(String::as_str) == Some("value") {
                    value = Some(Box::new(self.expr(o, f)));
                }
            }
            match callee.child("expression") {
                Some(c) => callee = c,
                None => return Expr::Opaque(arg_exprs),
            }
        }
        let mut site = CallSite {
            kind: CallKind::Intrinsic,
            name: String::new(),
            target: None,
            args: arg_exprs,
            value,
            decl: None,
            callee: None,
            src: n.src,
            ast_id: n.id,
        };
        match &callee.kind {
            AstKind::Identifier => {
                let name = callee.name().unwrap_or("").to_string();
                let r = callee.referenced().unwrap_or(0);
                if is_builtin_ref(r) {
                    if name == "gasleft" {
                        return Expr::Env(EnvRead::GasLeft);
                    }
                    site.name = name;
                } else {
                    match self.idx.get(r) {
                        Some(d) if d.kind == AstKind::FunctionDefinition => {
                            site.kind = CallKind::Internal;
                            site.name = name;
                            site.decl = Some(r);
                        }
                        Some(d) if d.kind == AstKind::EventDefinition => site.name = format!("emit {name}"),
                        Some(d) if d.kind == AstKind::ErrorDefinition => site.name = format!("error {name}"),
                        _ => site.name = name,
                    }
                }
            }
            AstKind::MemberAccess => {
                let member = callee.str_attr("memberName").unwrap_or("").to_string();
                let base = callee.child("expression");
                let base_ty = base.and_then(|b| b.type_string()).unwrap_or("").to_string();
                let base_ident = base.filter(|b| b.kind == AstKind::Identifier);
                let member_decl = callee.referenced().and_then(|r| self.idx.get(r));
                let is_fn_decl = member_decl.is_some_and(|d| d.kind == AstKind::FunctionDefinition);
                if base_ident.is_some_and(|b| b.name() == Some("abi") && b.referenced().is_some_and(is_builtin_ref)) {
                    site.name = format!("abi.{member}");
                } else if base_ty.starts_with("address") && matches!(member.as_str(), "transfer" | "send") {
                    site.kind = if member == "transfer" { CallKind::Transfer } else { CallKind::Send };
                    site.name = member;
                    site.target = base.map(|b| Box::new(self.expr(b, f)));
                } else if base_ty.starts_with("address") && matches!(member.as_str(), "call" | "delegatecall" | "staticcall") {
                    site.kind = CallKind::LowLevel {
                        with_value: site.value.is_some(),
                    };
                    site.name = member;
                    site.target = base.map(|b| Box::new(self.expr(b, f)));
                } else if is_fn_decl {
                    let d = member_decl.unwrap();
                    let d_contract = self.idx.contract_of.get(&d.id).copied();
                    let base_is_super = base_ident.is_some_and(|b| b.name() == Some("super"));
                    let base_names_contract = base_ident
                        .and_then(|b| b.referenced())
                        .and_then(|r| self.idx.get(r))
                        .is_some_and(|x| x.kind == AstKind::ContractDefinition);
                    let is_library = d_contract.is_some_and(|c| self.idx.contract_kind(c) == "library");
                    if base_is_super || base_names_contract || is_library {
                        site.kind = CallKind::Internal;
                        site.name = member.clone();
                        site.decl = Some(d.id);
                        if is_library && !base_names_contract {
                            // using-for attached call: receiver is the first argument
                            if let Some(b) = base {
                                let recv = self.expr(b, f);
                                site.args.insert(0, recv);
                            }
                        }
                        // exact target, no virtual dispatch
                        site.callee = Some(String::from("!exact"));
                    } else {
                        let k = base_ty
                            .strip_prefix("contract ")
                            .unwrap_or(base_ty.as_str())
                            .to_string();
                        site.kind = CallKind::External { resolved: false };
                        site.name = format!("{k}.{member}");
                        site.decl = Some(d.id);
                        site.target = base.map(|b| Box::new(self.expr(b, f)));
                    }
                } else {
                    site.name = member;
                    site.target = base.map(|b| Box::new(self.expr(b, f)));
                }
            }
            AstKind::NewExpression => {
                site.kind = CallKind::Creation;
                site.name = "new".into();
            }
            _ => {
                let c = self.expr(callee, f);
                site.target = Some(Box::new(c));
                site.name = "<dynamic>".into();
            }
        }
        Expr::Call(Box::new(site))
    }

    // ---- statements ----

    fn build_function(&mut self, ctx: i64, def: i64) {
        let Some(fdef) = self.idx.get(def) else { return };
        self.ensure_state(ctx);
        let key = self.built[&(ctx, def)].clone();
        let (ctx_name, fname) = key.split_once('.').map(|(a, b)| (a.to_string(), b.to_string())).unwrap();
        let is_ctor = Index::fn_kind(fdef) == "constructor";
        let visibility = fdef.str_attr("visibility").unwrap_or("public").to_string();
        let mut f = FnCtx {
            ctx,
            ctx_name: ctx_name.clone(),
            fname: fname.clone(),
            is_ctor,
            order: 0,
            mods: vec![],
            body: fdef.child("body").map(|b| b.id),
            placeholder: vec![],
            nodes: vec![],
        };

        let entry = self.new_node(StmtKind::FunctionEntry, fdef.src, &ctx_name, &fname, def);
        let exit = self.new_node(StmtKind::FunctionExit, fdef.src, &ctx_name, &fname, def);
        self.g.nodes[exit as usize].order = u32::MAX;
        let mut params = Vec::new();
        for p in fdef.child("parameters").map(|p| p.list("parameters")).unwrap_or_default() {
            params.push(self.declare_local(p, &f, VarKind::Param, Some(entry)));
        }
        let ret_var = format!("{ctx_name}.{fname}.<return>");
        self.g.vars.insert(
            ret_var.clone(),
            VarInfo {
                kind: VarKind::Return,
                type_string: String::new(),
                decl_node: Some(exit),
            },
        );
        let mut named_returns = Vec::new();
        for p in fdef.child("returnParameters").map(|p| p.list("parameters")).unwrap_or_default() {
            if p.name().is_some_and(|n| !n.is_empty()) {
                named_returns.push(self.declare_local(p, &f, VarKind::Local, Some(entry)));
            }
        }
        {
            let en = &mut self.g.nodes[entry as usize];
            en.facts.defs = params.iter().cloned().chain(named_returns.iter().cloned()).collect();
            en.in_constructor = is_ctor;
            en.external_entry = !is_ctor && matches!(visibility.as_str(), "public" | "external");
        }
        {
            let ex = &mut self.g.nodes[exit as usize];
            ex.facts.uses.insert(ret_var.clone());
            ex.facts.uses.extend(named_returns.iter().cloned());
            ex.in_constructor = is_ctor;
        }
        self.edge(entry, exit, EdgeKind::Control);

        let mut modifier_names = Vec::new();
        for m in fdef.list("modifiers") {
            let target = m
                .child("modifierName")
                .and_then(|n| n.referenced())
                .and_then(|r| self.idx.get(r));
            if let Some(t) = target {
                if t.kind == AstKind::ModifierDefinition {
                    if let Some(mid) = self.idx.modifier_dispatch(ctx, t.id) {
                        f.mods.push(m.id);
                        modifier_names.push(self.idx.name_of(mid));
                    }
                }
            }
        }

        let mut tree = Vec::new();
        self.run_modifiers(0, entry, &mut f, &mut tree);
        tree.push(SNode::Simple(exit));

        let mut reach: Reach = BTreeMap::new();
        for p in self.g.nodes[entry as usize].facts.defs.clone() {
            reach.entry(p).or_default().insert(entry);
        }
        self.reach_seq(&tree, &mut reach);

        let body = f.nodes.clone();
        self.g.functions.insert(
            key.clone(),
            FunctionInfo {
                key,
                contract: ctx_name,
                name: fname,
                entry,
                exit,
                visibility,
                mutability: fdef.str_attr("stateMutability").unwrap_or("nonpayable").to_string(),
                is_constructor: is_ctor,
                params,
                modifiers: modifier_names,
                src: fdef.src,
                body,
            },
        );
    }

    /// Inlines modifier `i` (and, at its placeholder, the rest of the chain).
    fn run_modifiers(&mut self, i: usize, parent: NodeId, f: &mut FnCtx, out: &mut Vec<SNode>) {
        if i == f.mods.len() {
            if let Some(body) = f.body.and_then(|b| self.idx.get(b)) {
                self.stmt(body, parent, f, out);
            }
            return;
        }
        let inv = self.idx.get(f.mods[i]).expect("modifier invocation");
        let decl = inv
            .child("modifierName")
            .and_then(|n| n.referenced())
            .and_then(|r| self.idx.modifier_dispatch(f.ctx, r))
            .and_then(|m| self.idx.get(m));
        let Some(mdef) = decl else {
            self.run_modifiers(i + 1, parent, f, out);
            return;
        };
        let params = mdef.child("parameters").map(|p| p.list("parameters")).unwrap_or_default();
        if !params.is_empty() {
            let n = self.stmt_node(StmtKind::Assignment, inv, f, parent);
            let mut facts = NodeFacts::default();
            for p in params {
                let v = self.declare_local(p, f, VarKind::Param, Some(n));
                facts.defs.insert(v);
            }
            let args: Vec<Expr> = inv.list("arguments").into_iter().map(|a| self.expr(a, f)).collect();
            let e = Expr::Opaque(args);
            collect_facts(&e, &mut facts);
            self.g.nodes[n as usize].facts = facts;
            self.g.nodes[n as usize].expr = Some(e);
            self.register_calls(n, f.ctx);
            out.push(SNode::Simple(n));
        }
        f.placeholder.push(i + 1);
        if let Some(body) = mdef.child("body") {
            self.stmt(body, parent, f, out);
        }
        f.placeholder.pop();
    }

    fn stmt_node(&mut self, kind: StmtKind, s: &AstNode, f: &mut FnCtx, parent: NodeId) -> NodeId {
        let n = self.new_node(kind, s.src, &f.ctx_name.clone(), &f.fname.clone(), s.id);
        f.order += 1;
        self.g.nodes[n as usize].order = f.order;
        self.g.nodes[n as usize].in_constructor = f.is_ctor;
        f.nodes.push(n);
        self.edge(parent, n, EdgeKind::Control);
        n
    }

    fn simple(&mut self, kind: StmtKind, s: &'a AstNode, e: Option<Expr>, extra_defs: Vec<VarId>, f: &mut FnCtx, parent: NodeId) -> NodeId {
        let n = self.stmt_node(kind, s, f, parent);
        let mut facts = NodeFacts::default();
        facts.defs.extend(extra_defs);
        if let Some(e) = &e {
            collect_facts(e, &mut facts);
        }
        let node = &mut self.g.nodes[n as usize];
        node.facts = facts;
        node.expr = e;
        self.register_calls(n, f.ctx);
        n
    }

    fn stmt(&mut self, s: &'a AstNode, parent: NodeId, f: &mut FnCtx, out: &mut Vec<SNode>) {
        match &s.kind {
            AstKind::Block | AstKind::UncheckedBlock => {
                for c in s.list("statements") {
                    self.stmt(c, parent, f, out);
                }
            }
            AstKind::VariableDeclarationStatement => {
                let mut defs = Vec::new();
                for d in s.list("declarations") {
                    defs.push(self.declare_local(d, f, VarKind::Local, None));
                }
                let init = s.child("initialValue").map(|e| self.expr(e, f));
                let n = self.simple(StmtKind::Assignment, s, init, defs.clone(), f, parent);
                for d in defs {
                    if let Some(v) = self.g.vars.get_mut(&d) {
                        v.decl_node.get_or_insert(n);
                    }
                }
                out.push(SNode::Simple(n));
            }
            AstKind::ExpressionStatement => {
                let Some(e) = s.child("expression") else { return };
                let ex = self.expr(e, f);
                let kind = match (&e.kind, &ex) {
                    (AstKind::Require, _) => StmtKind::Require,
                    (_, Expr::Assign(..)) => StmtKind::Assignment,
                    (_, Expr::Unary(op, _)) if matches!(op.as_str(), "++" | "--" | "delete") => StmtKind::Assignment,
                    (_, Expr::Call(_)) => StmtKind::Call,
                    _ => StmtKind::ExpressionStmt,
                };
                let ex = if kind == StmtKind::Require {
                    // the condition is the first argument
                    match ex {
                        Expr::Call(c) => {
                            let mut args = c.args.into_iter();
                            let cond = args.next().unwrap_or(Expr::Opaque(vec![]));
                            let rest: Vec<Expr> = args.collect();
                            if rest.is_empty() {
                                cond
                            } else {
                                let n = self.simple(StmtKind::Require, s, Some(cond.clone()), vec![], f, parent);
                                // message arguments still contribute uses
                                let mut extra = NodeFacts::default();
                                collect_facts(&Expr::Opaque(rest), &mut extra);
                                let node = &mut self.g.nodes[n as usize];
                                node.facts.uses.extend(extra.uses);
                                node.facts.env.extend(extra.env);
                                out.push(SNode::Simple(n));
                                return;
                            }
                        }
                        other => other,
                    }
                } else {
                    ex
                };
                let n = self.simple(kind, s, Some(ex), vec![], f, parent);
                out.push(SNode::Simple(n));
            }
            AstKind::If => {
                let cond = s.child("condition").map(|c| self.expr(c, f));
                let n = self.simple(StmtKind::If, s, cond, vec![], f, parent);
                let mut then = Vec::new();
                if let Some(t) = s.child("trueBody") {
                    self.stmt(t, n, f, &mut then);
                }
                let mut other = Vec::new();
                if let Some(e) = s.child("falseBody") {
                    self.stmt(e, n, f, &mut other);
                }
                out.push(SNode::If { cond: n, then, other });
            }
            AstKind::While | AstKind::DoWhile | AstKind::For => {
                if let Some(init) = s.child("initializationExpression") {
                    self.stmt(init, parent, f, out);
                }
                let cond = s.child("condition").map(|c| self.expr(c, f));
                let n = self.simple(StmtKind::Loop, s, cond, vec![], f, parent);
                let mut body = Vec::new();
                if let Some(b) = s.child("body") {
                    self.stmt(b, n, f, &mut body);
                }
                if let Some(post) = s.child("loopExpression") {
                    self.stmt(post, n, f, &mut body);
                }
                out.push(SNode::Loop { cond: n, body });
            }
            AstKind::Return => {
                let e = s.child("expression").map(|e| self.expr(e, f));
                let ret = format!("{}.{}.<return>", f.ctx_name, f.fname);
                let n = self.simple(StmtKind::Return, s, e, vec![ret], f, parent);
                out.push(SNode::Simple(n));
            }
            AstKind::EmitStatement | AstKind::RevertStatement => {
                let e = s.children.first().map(|c| self.expr(c, f));
                let n = self.simple(StmtKind::ExpressionStmt, s, e, vec![], f, parent);
                out.push(SNode::Simple(n));
            }
            AstKind::InlineAssembly => {
                let n = self.simple(StmtKind::ExpressionStmt, s, None, vec![], f, parent);
                self.g.nodes[n as usize].opaque = true;
                self.g.diagnostics.push(IpdgDiagnostic::OpaqueAssembly { node: n });
                out.push(SNode::Simple(n));
            }
            AstKind::PlaceholderStatement => {
                if let Some(next) = f.placeholder.last().copied() {
                    let saved = f.placeholder.pop();
                    self.run_modifiers(next, parent, f, out);
                    if let Some(x) = saved {
                        f.placeholder.push(x);
                    }
                }
            }
            AstKind::TryStatement => {
                let call = s.child("externalCall").map(|c| self.expr(c, f));
                let n = self.simple(StmtKind::Call, s, call, vec![], f, parent);
                let mut then = Vec::new();
                for clause in s.list("clauses") {
                    if let Some(params) = clause.child("parameters") {
                        for p in params.list("parameters") {
                            let v = self.declare_local(p, f, VarKind::Local, Some(n));
                            self.g.nodes[n as usize].facts.defs.insert(v);
                        }
                    }
                    if let Some(b) = clause.child("block") {
                        self.stmt(b, n, f, &mut then);
                    }
                }
                out.push(SNode::If { cond: n, then, other: vec![] });
            }
            AstKind::Break | AstKind::Continue => {}
            other => {
                self.g.diagnostics.push(IpdgDiagnostic::UnsupportedConstruct {
                    ast_id: s.id,
                    what: format!("{other:?}"),
                });
            }
        }
    }

    fn register_calls(&mut self, n: NodeId, ctx: i64) {
        let mut sites = Vec::new();
        if let Some(e) = &self.g.nodes[n as usize].expr {
            e.walk(&mut |x| {
                if let Expr::Call(c) = x {
                    sites.push((**c).clone());
                }
            });
        }
        for (i, c) in sites.iter().enumerate() {
            let exact = c.callee.as_deref() == Some("!exact");
            if matches!(c.kind, CallKind::Internal | CallKind::External { .. }) {
                self.pending_calls.push((n, i, ctx, exact));
            }
        }
        self.g.nodes[n as usize].facts.calls = sites;
        for c in &mut self.g.nodes[n as usize].facts.calls {
            if c.callee.as_deref() == Some("!exact") {
                c.callee = None;
            }
        }
    }

    // ---- post passes ----

    fn wire_calls(&mut self) {
        let mut i = 0;
        while i < self.pending_calls.len() {
            let (n, ci, ctx, exact) = self.pending_calls[i];
            i += 1;
            let site = self.g.nodes[n as usize].facts.calls[ci].clone();
            let Some(decl) = site.decl else { continue };
            let target: Option<(i64, i64)> = match site.kind {
                CallKind::Internal => {
                    let def = if exact { Some(decl) } else { self.idx.dispatch(ctx, decl) };
                    def.filter(|d| self.idx.get(*d).is_some_and(Index::is_implemented)).map(|d| {
                        let dc = self.idx.contract_of.get(&d).copied().unwrap_or(ctx);
                        let in_lin = self.idx.linearization(ctx).contains(&dc);
                        (if in_lin { ctx } else { dc }, d)
                    })
                }
                CallKind::External { .. } => {
                    let dc = self.idx.contract_of.get(&decl).copied();
                    match dc {
                        Some(k) if self.idx.contract_kind(k) == "contract"
                            && self.idx.get(k).is_some_and(|c| !c.bool_attr("abstract")) =>
                        {
                            self.idx.dispatch(k, decl).map(|d| (k, d))
                        }
                        _ => None,
                    }
                }
                _ => None,
            };
            match target {
                Some((tctx, def)) => {
                    let key = self.enqueue(tctx, def);
                    self.drain();
                    let (entry, exit) = {
                        let fi = &self.g.functions[&key];
                        (fi.entry, fi.exit)
                    };
                    self.edge(n, entry, EdgeKind::Call);
                    self.edge(exit, n, EdgeKind::Return);
                    let c = &mut self.g.nodes[n as usize].facts.calls[ci];
                    c.callee = Some(key);
                    if let CallKind::External { resolved } = &mut c.kind {
                        *resolved = true;
                    }
                }
                None => {
                    if matches!(site.kind, CallKind::External { .. }) {
                        let sink = match self.sinks.get(&site.name) {
                            Some(s) => *s,
                            None => {
                                let (k, fname) = site.name.split_once('.').unwrap_or(("?", site.name.as_str()));
                                let s = self.new_node(StmtKind::ExternalSink, SrcRange::default(), k, fname, -1);
                                self.sinks.insert(site.name.clone(), s);
                                s
                            }
                        };
                        self.edge(n, sink, EdgeKind::Call);
                    }
                    self.g.diagnostics.push(IpdgDiagnostic::UnresolvedCall {
                        node: n,
                        name: site.name.clone(),
                    });
                }
            }
        }
    }

    fn is_local(&self, v: &str) -> bool {
        matches!(
            self.g.vars.get(v).map(|i| i.kind),
            Some(VarKind::Local | VarKind::Param | VarKind::Return)
        )
    }

    fn reach_seq(&mut self, seq: &[SNode], reach: &mut Reach) {
        for s in seq {
            match s {
                SNode::Simple(n) => self.reach_node(*n, reach),
                SNode::If { cond, then, other } => {
                    self.reach_node(*cond, reach);
                    let mut t = reach.clone();
                    self.reach_seq(then, &mut t);
                    self.reach_seq(other, reach);
                    merge(reach, &t);
                }
                SNode::Loop { cond, body } => loop {
                    let before = reach.clone();
                    self.reach_node(*cond, reach);
                    let mut b = reach.clone();
                    self.reach_seq(body, &mut b);
                    merge(reach, &b);
                    if *reach == before {
                        break;
                    }
                },
            }
        }
    }

    fn reach_node(&mut self, n: NodeId, reach: &mut Reach) {
        let facts = self.g.nodes[n as usize].facts.clone();
        for u in &facts.uses {
            if !self.is_local(u) {
                continue;
            }
            if let Some(defs) = reach.get(u) {
                for d in defs.clone() {
                    self.edge(d, n, EdgeKind::Data(u.clone()));
                }
            }
        }
        let strong = strong_defs(self.g.nodes[n as usize].expr.as_ref());
        for d in &facts.defs {
            if !self.is_local(d) {
                continue;
            }
            let kind = self.g.nodes[n as usize].stmt_kind;
            let is_strong = strong.contains(d) || kind == StmtKind::Return || (kind == StmtKind::Assignment && !facts.uses.contains(d) && !weak_target(self.g.nodes[n as usize].expr.as_ref(), d));
            let e = reach.entry(d.clone()).or_default();
            if is_strong {
                e.clear();
            }
            e.insert(n);
        }
    }

    fn state_edges(&mut self) {
        let mut writers: BTreeMap<VarId, BTreeSet<NodeId>> = BTreeMap::new();
        let mut readers: BTreeMap<VarId, BTreeSet<NodeId>> = BTreeMap::new();
        for n in &self.g.nodes {
            for d in &n.facts.defs {
                if self.g.state_vars.contains_key(d) {
                    writers.entry(d.clone()).or_default().insert(n.id);
                }
            }
            for u in &n.facts.uses {
                if self.g.state_vars.contains_key(u) {
                    readers.entry(u.clone()).or_default().insert(n.id);
                }
            }
        }
        for (v, ws) in &writers {
            for r in readers.get(v).into_iter().flatten() {
                for w in ws {
                    self.edge(*w, *r, EdgeKind::Data(v.clone()));
                }
            }
        }
    }

    fn anti_deps(&mut self) {
        let mut out = BTreeSet::new();
        for fi in self.g.functions.values() {
            for (i, &r) in fi.body.iter().enumerate() {
                let rn = &self.g.nodes[r as usize];
                for &w in &fi.body[i + 1..] {
                    let wn = &self.g.nodes[w as usize];
                    for v in rn.facts.uses.intersection(&wn.facts.defs) {
                        if self.g.state_vars.contains_key(v) {
                            out.insert((r, w, v.clone()));
                        }
                    }
                }
            }
        }
        self.g.anti_deps = out;
    }
}

fn merge(into: &mut Reach, other: &Reach) {
    for (k, v) in other {
        into.entry(k.clone()).or_default().extend(v.iter().copied());
    }
}

/// Variables overwritten wholesale (`x = ...` on a plain variable).
fn strong_defs(e: Option<&Expr>) -> BTreeSet<VarId> {
    let mut out = BTreeSet::new();
    if let Some(e) = e {
        e.walk(&mut |x| {
            if let Expr::Assign(op, l, _) = x {
                if op == "=" {
                    match l.as_ref() {
                        Expr::Var(v) => {
                            out.insert(v.clone());
                        }
                        Expr::Tuple(items) => {
                            for i in items.iter().flatten() {
                                if let Expr::Var(v) = i {
                                    out.insert(v.clone());
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        });
    }
    out
}

/// True when `v` is written only through an index or member path.
fn weak_target(e: Option<&Expr>, v: &str) -> bool {
    let mut weak = false;
    if let Some(e) = e {
        e.walk(&mut |x| match x {
            Expr::Assign(_, l, _) => {
                if !matches!(l.as_ref(), Expr::Var(_)) && l.base_var().map(String::as_str) == Some(v) {
                    weak = true;
                }
            }
            Expr::Call(c) if matches!(c.name.as_str(), "push" | "pop") => {
                if c.target.as_ref().and_then(|t| t.base_var()).map(String::as_str) == Some(v) {
                    weak = true;
                }
            }
            _ => {}
        });
    }
    weak
}

fn literal(n: &AstNode) -> Lit {
    let kind_attr = n.str_attr("kind").unwrap_or("");
    let ty = n.type_string().unwrap_or("");
    let text = n
        .str_attr("normalized")
        .or_else(|| n.str_attr("value"))
        .unwrap_or("")
        .to_string();
    let kind = match kind_attr {
        "number" if ty.starts_with("address") => LitKind::Address,
        "number" => LitKind::Number,
        "bool" => LitKind::Bool,
        _ => LitKind::Str,
    };
    let value = match kind {
        LitKind::Number | LitKind::Address => parse_number(&text),
        LitKind::Bool => Some(ruint::aliases::U256::from((text == "true") as u8)),
        LitKind::Str => None,
    };
    Lit { kind, text, value, src: n.src }
}

/// Def/use/env/call/literal facts of an expression.
pub fn collect_facts(e: &Expr, facts: &mut NodeFacts) {
    match e {
        Expr::Var(v) => {
            facts.uses.insert(v.clone());
        }
        Expr::Env(x) => {
            facts.env.insert(*x);
        }
        Expr::Lit(l) => facts.literals.push(l.clone()),
        Expr::Assign(op, l, r) => {
            lvalue(l, facts, op != "=");
            collect_facts(r, facts);
        }
        Expr::Unary(op, inner) if matches!(op.as_str(), "++" | "--" | "delete") => lvalue(inner, facts, true),
        Expr::Call(c) if matches!(c.name.as_str(), "push" | "pop") && matches!(c.kind, CallKind::Intrinsic) && c.target.is_some() => {
            lvalue(c.target.as_ref().unwrap(), facts, true);
            for a in &c.args {
                collect_facts(a, facts);
            }
        }
        Expr::Call(c) => {
            if let Some(t) = &c.target {
                collect_facts(t, facts);
            }
            if let Some(v) = &c.value {
                collect_facts(v, facts);
            }
            for a in &c.args {
                collect_facts(a, facts);
            }
        }
        Expr::Index(b, i) => {
            collect_facts(b, facts);
            if let Some(i) = i {
                collect_facts(i, facts);
            }
        }
        Expr::Member(b, _) | Expr::Unary(_, b) | Expr::Conv(_, b) => collect_facts(b, facts),
        Expr::Binary(_, l, r) => {
            collect_facts(l, facts);
            collect_facts(r, facts);
        }
        Expr::Cond(a, b, c) => {
            collect_facts(a, facts);
            collect_facts(b, facts);
            collect_facts(c, facts);
        }
        Expr::Tuple(items) => {
            for i in items.iter().flatten() {
                collect_facts(i, facts);
            }
        }
        Expr::Opaque(items) => {
            for i in items {
                collect_facts(i, facts);
            }
        }
    }
}

fn lvalue(e: &Expr, facts: &mut NodeFacts, also_read: bool) {
    match e {
        Expr::Var(v) => {
            facts.defs.insert(v.clone());
            if also_read {
                facts.uses.insert(v.clone());
            }
        }
        Expr::Index(b, i) => {
            lvalue(b, facts, also_read);
            if let Some(i) = i {
                collect_facts(i, facts);
            }
        }
        Expr::Member(b, _) => lvalue(b, facts, also_read),
        Expr::Tuple(items) => {
            for i in items.iter().flatten() {
                lvalue(i, facts, also_read);
            }
        }
        other => collect_facts(other, facts),
    }
}
