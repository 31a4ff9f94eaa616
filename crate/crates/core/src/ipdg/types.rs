use crate::artifact::SrcRange;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub type NodeId = u32;
/// Qualified variable name: `C.v` for state, `C.f.v` for locals and parameters.
pub type VarId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StmtKind {
    ExpressionStmt,
    Assignment,
    Require,
    If,
    Loop,
    Call,
    Return,
    StateVarDecl,
    FunctionEntry,
    FunctionExit,
    ExternalSink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvRead {
    ChainId,
    Number,
    Timestamp,
    GasLeft,
    Sender,
    Value,
    Origin,
    Coinbase,
    GasPrice,
    GasLimit,
    BaseFee,
    Prevrandao,
    BlockHash,
    This,
    Balance,
}

impl EnvRead {
    pub fn from_member(base: &str, member: &str) -> Option<EnvRead> {
        Some(match (base, member) {
            ("block", "chainid") => EnvRead::ChainId,
            ("block", "number") => EnvRead::Number,
            ("block", "timestamp") => EnvRead::Timestamp,
            ("block", "coinbase") => EnvRead::Coinbase,
            ("block", "gaslimit") => EnvRead::GasLimit,
            ("block", "basefee") => EnvRead::BaseFee,
            ("block", "difficulty") | ("block", "prevrandao") => EnvRead::Prevrandao,
            ("msg", "sender") => EnvRead::Sender,
            ("msg", "value") => EnvRead::Value,
            ("msg", "gas") => EnvRead::GasLeft,
            ("tx", "origin") => EnvRead::Origin,
            ("tx", "gasprice") => EnvRead::GasPrice,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LitKind {
    Number,
    Address,
    Bool,
    Str,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lit {
    pub kind: LitKind,
    /// Normalized text (decimal or checksummed address).
    pub text: String,
    pub value: Option<U256>,
    pub src: SrcRange,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallKind {
    Internal,
    External { resolved: bool },
    Intrinsic,
    Transfer,
    Send,
    LowLevel { with_value: bool },
    Creation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub kind: CallKind,
    /// `ecrecover`, `transfer`, `call`, `Iface.fn`, internal callee name, ...
    pub name: String,
    /// Address or contract operand of external, transfer/send and low-level calls.
    pub target: Option<Box<Expr>>,
    pub args: Vec<Expr>,
    pub value: Option<Box<Expr>>,
    /// Referenced function declaration, before virtual dispatch.
    pub decl: Option<i64>,
    /// Resolved function key (`C.f`) once the graph is built.
    pub callee: Option<String>,
    pub src: SrcRange,
    pub ast_id: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Var(VarId),
    Env(EnvRead),
    Lit(Lit),
    Index(Box<Expr>, Option<Box<Expr>>),
    Member(Box<Expr>, String),
    Binary(String, Box<Expr>, Box<Expr>),
    Unary(String, Box<Expr>),
    Assign(String, Box<Expr>, Box<Expr>),
    Call(Box<CallSite>),
    /// Type conversion to the named type.
    Conv(String, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Tuple(Vec<Option<Expr>>),
    Opaque(Vec<Expr>),
}

impl Expr {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Var(_) | Expr::Env(_) | Expr::Lit(_) => {}
            Expr::Index(b, i) => {
                b.walk(f);
                if let Some(i) = i {
                    i.walk(f);
                }
            }
            Expr::Member(b, _) | Expr::Unary(_, b) | Expr::Conv(_, b) => b.walk(f),
            Expr::Binary(_, l, r) | Expr::Assign(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(c) => {
                if let Some(t) = &c.target {
                    t.walk(f);
                }
                if let Some(v) = &c.value {
                    v.walk(f);
                }
                for a in &c.args {
                    a.walk(f);
                }
            }
            Expr::Cond(a, b, c) => {
                a.walk(f);
                b.walk(f);
                c.walk(f);
            }
            Expr::Tuple(items) => {
                for i in items.iter().flatten() {
                    i.walk(f);
                }
            }
            Expr::Opaque(items) => {
                for i in items {
                    i.walk(f);
                }
            }
        }
    }

    /// Storage or local variable an lvalue ultimately writes.
    pub fn base_var(&self) -> Option<&VarId> {
        match self {
            Expr::Var(v) => Some(v),
            Expr::Index(b, _) | Expr::Member(b, _) | Expr::Conv(_, b) => b.base_var(),
            _ => None,
        }
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    pub fn envs(&self) -> BTreeSet<EnvRead> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Env(x) = e {
                out.insert(*x);
            }
        });
        out
    }

    /// Strips type conversions and single-element tuples.
    pub fn peel(&self) -> &Expr {
        match self {
            Expr::Conv(_, e) => e.peel(),
            Expr::Tuple(items) if items.len() == 1 && items[0].is_some() => items[0].as_ref().unwrap().peel(),
            e => e,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFacts {
    pub defs: BTreeSet<VarId>,
    pub uses: BTreeSet<VarId>,
    pub env: BTreeSet<EnvRead>,
    pub calls: Vec<CallSite>,
    pub literals: Vec<Lit>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpdgNode {
    pub id: NodeId,
    pub stmt_kind: StmtKind,
    pub src: SrcRange,
    pub contract: String,
    /// Function name, or `<global>` for state variable declarations.
    pub function: String,
    pub ast_id: i64,
    /// Statement order within the function; the entry is 0.
    pub order: u32,
    pub opaque: bool,
    pub in_constructor: bool,
    /// Entry of a public/external, non-constructor function.
    pub external_entry: bool,
    pub facts: NodeFacts,
    /// Condition for If/Loop/Require, returned value for Return, statement expression otherwise.
    pub expr: Option<Expr>,
}

impl IpdgNode {
    pub fn fn_key(&self) -> String {
        format!("{}.{}", self.contract, self.function)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Control,
    Data(VarId),
    Call,
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IpdgEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    State,
    Constant,
    Immutable,
    Local,
    Param,
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarInfo {
    pub kind: VarKind,
    pub type_string: String,
    /// Declaring node (StateVarDecl, or the function entry for parameters).
    pub decl_node: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub key: String,
    pub contract: String,
    pub name: String,
    pub entry: NodeId,
    pub exit: NodeId,
    pub visibility: String,
    pub mutability: String,
    pub is_constructor: bool,
    pub params: Vec<VarId>,
    pub modifiers: Vec<String>,
    pub src: SrcRange,
    /// Statement nodes in order (entry and exit excluded).
    pub body: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IpdgDiagnostic {
    OpaqueAssembly { node: NodeId },
    UnresolvedCall { node: NodeId, name: String },
    UnsupportedConstruct { ast_id: i64, what: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipdg {
    pub nodes: Vec<IpdgNode>,
    pub edges: BTreeSet<IpdgEdge>,
    pub vars: BTreeMap<VarId, VarInfo>,
    pub state_vars: BTreeMap<VarId, NodeId>,
    pub constants: BTreeMap<VarId, U256>,
    pub functions: BTreeMap<String, FunctionInfo>,
    /// (read node, later write node, variable) within one function, in statement order.
    pub anti_deps: BTreeSet<(NodeId, NodeId, VarId)>,
    pub diagnostics: Vec<IpdgDiagnostic>,
    #[serde(skip)]
    pub(crate) preds: Vec<Vec<usize>>,
    #[serde(skip)]
    pub(crate) succs: Vec<Vec<usize>>,
    #[serde(skip)]
    pub(crate) edge_list: Vec<IpdgEdge>,
}

impl Ipdg {
    /// Assembles a graph from raw parts (used by generators and tests).
    pub fn from_parts(nodes: Vec<IpdgNode>, edges: impl IntoIterator<Item = IpdgEdge>) -> Ipdg {
        let mut g = Ipdg {
            nodes,
            edges: edges.into_iter().collect(),
            ..Default::default()
        };
        g.index();
        g
    }

    pub(crate) fn index(&mut self) {
        self.edge_list = self.edges.iter().cloned().collect();
        self.preds = vec![Vec::new(); self.nodes.len()];
        self.succs = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edge_list.iter().enumerate() {
            self.succs[e.from as usize].push(i);
            self.preds[e.to as usize].push(i);
        }
    }

    pub fn node(&self, id: NodeId) -> &IpdgNode {
        &self.nodes[id as usize]
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &IpdgEdge> {
        self.preds
            .get(id as usize)
            .into_iter()
            .flatten()
            .map(|&i| &self.edge_list[i])
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &IpdgEdge> {
        self.succs
            .get(id as usize)
            .into_iter()
            .flatten()
            .map(|&i| &self.edge_list[i])
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.outgoing(from).any(|e| e.to == to)
    }

    pub fn function_of(&self, n: NodeId) -> Option<&FunctionInfo> {
        self.functions.get(&self.node(n).fn_key())
    }

    pub fn is_constant(&self, v: &str) -> bool {
        self.constants.contains_key(v)
    }
}
