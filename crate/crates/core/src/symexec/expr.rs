//! Hash-consed symbolic 256-bit words.

use crate::artifact::abi::keccak256;
use crate::evm::arith::{eval_pure, is_pure};
use crate::evm::Opcode;
use ruint::aliases::U256;
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub type ExprId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const(U256),
    Sym(String),
    /// Pure opcode applied to operands, top of stack first.
    Op(Opcode, Vec<ExprId>),
    /// `cond != 0 ? a : b`
    Ite(ExprId, ExprId, ExprId),
    /// Big-endian word built from (word, byte index) pairs; `None` is a zero byte.
    Bytes(Vec<Option<(ExprId, u8)>>),
    /// Uninterpreted function application.
    Uf(String, Vec<ExprId>),
}

/// Assignment of concrete values to symbols and to uninterpreted applications (`app!<id>`).
pub type Model = BTreeMap<String, U256>;

pub fn app_key(id: ExprId) -> String {
    format!("app!{id}")
}

#[derive(Clone, Debug, Default)]
pub struct ExprPool {
    nodes: Vec<Node>,
    index: HashMap<Node, ExprId>,
}

impl ExprPool {
    pub fn new() -> ExprPool {
        ExprPool::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: ExprId) -> &Node {
        &self.nodes[id as usize]
    }

    fn intern(&mut self, n: Node) -> ExprId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let id = self.nodes.len() as ExprId;
        self.nodes.push(n.clone());
        self.index.insert(n, id);
        id
    }

    pub fn constant(&mut self, v: U256) -> ExprId {
        self.intern(Node::Const(v))
    }

    pub fn word(&mut self, v: u64) -> ExprId {
        self.constant(U256::from(v))
    }

    pub fn sym(&mut self, name: &str) -> ExprId {
        self.intern(Node::Sym(name.to_string()))
    }

    pub fn as_const(&self, id: ExprId) -> Option<U256> {
        match self.node(id) {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn op(&mut self, op: Opcode, args: &[ExprId]) -> ExprId {
        debug_assert!(is_pure(op));
        let consts: Option<Vec<U256>> = args.iter().map(|a| self.as_const(*a)).collect();
        if let Some(c) = consts {
            if let Some(v) = eval_pure(op, &c) {
                return self.constant(v);
            }
        }
        if op == Opcode::Iszero {
            // ISZERO(ISZERO(cmp)) == cmp for 0/1 valued comparisons
            if let Node::Op(Opcode::Iszero, inner) = self.node(args[0]).clone() {
                if self.is_boolean(inner[0]) {
                    return inner[0];
                }
            }
        }
        if op == Opcode::Exp {
            if let Some(e) = self.as_const(args[1]) {
                return self.exp_const(args[0], e);
            }
            return self.uf("exp", args);
        }
        if op == Opcode::Signextend && self.as_const(args[0]).is_none() {
            return self.uf("signextend", args);
        }
        self.intern(Node::Op(op, args.to_vec()))
    }

    fn is_boolean(&self, id: ExprId) -> bool {
        matches!(
            self.node(id),
            Node::Op(Opcode::Lt | Opcode::Gt | Opcode::Slt | Opcode::Sgt | Opcode::Eq | Opcode::Iszero, _)
        )
    }

    fn exp_const(&mut self, base: ExprId, e: U256) -> ExprId {
        let mut result = self.word(1);
        let mut sq = base;
        let mut e = e;
        while !e.is_zero() {
            if e.bit(0) {
                result = self.op(Opcode::Mul, &[result, sq]);
            }
            e >>= 1;
            if !e.is_zero() {
                sq = self.op(Opcode::Mul, &[sq, sq]);
            }
        }
        result
    }

    pub fn ite(&mut self, c: ExprId, a: ExprId, b: ExprId) -> ExprId {
        if a == b {
            return a;
        }
        match self.as_const(c) {
            Some(v) if v.is_zero() => b,
            Some(_) => a,
            None => self.intern(Node::Ite(c, a, b)),
        }
    }

    pub fn uf(&mut self, name: &str, args: &[ExprId]) -> ExprId {
        self.intern(Node::Uf(name.to_string(), args.to_vec()))
    }

    /// Assembles a word from 32 byte selections, folding constants and whole-word copies.
    pub fn bytes(&mut self, parts: Vec<Option<(ExprId, u8)>>) -> ExprId {
        debug_assert_eq!(parts.len(), 32);
        if let Some(Some((w, 0))) = parts.first() {
            if parts.iter().enumerate().all(|(i, p)| *p == Some((*w, i as u8))) {
                return *w;
            }
        }
        let mut bytes = [0u8; 32];
        let mut all_const = true;
        for (i, p) in parts.iter().enumerate() {
            match p {
                None => {}
                Some((w, b)) => match self.as_const(*w) {
                    Some(v) => bytes[i] = v.to_be_bytes::<32>()[*b as usize],
                    None => all_const = false,
                },
            }
        }
        if all_const {
            return self.constant(U256::from_be_bytes(bytes));
        }
        if parts.iter().all(Option::is_none) {
            return self.word(0);
        }
        self.intern(Node::Bytes(parts))
    }

    /// keccak256 over `len` bytes given as 32-byte chunks (the last zero-padded).
    pub fn keccak(&mut self, len: usize, chunks: &[ExprId]) -> ExprId {
        let consts: Option<Vec<U256>> = chunks.iter().map(|c| self.as_const(*c)).collect();
        if let Some(c) = consts {
            let mut data = Vec::with_capacity(chunks.len() * 32);
            for w in c {
                data.extend_from_slice(&w.to_be_bytes::<32>());
            }
            data.truncate(len);
            return self.constant(U256::from_be_bytes(keccak256(&data)));
        }
        let mut args = vec![self.word(len as u64)];
        args.extend_from_slice(chunks);
        self.uf("keccak", &args)
    }

    pub fn symbols(&self, id: ExprId) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        self.collect(id, &mut seen, &mut |n, _| {
            if let Node::Sym(s) = n {
                out.insert(s.clone());
            }
        });
        out
    }

    /// Uninterpreted applications reachable from `id`.
    pub fn applications(&self, id: ExprId) -> BTreeSet<ExprId> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        self.collect(id, &mut seen, &mut |n, i| {
            if matches!(n, Node::Uf(..)) {
                out.insert(i);
            }
        });
        out
    }

    /// Post-order walk over the sub-DAG rooted at `id`.
    pub fn collect(&self, id: ExprId, seen: &mut BTreeSet<ExprId>, f: &mut dyn FnMut(&Node, ExprId)) {
        if !seen.insert(id) {
            return;
        }
        for c in self.children(id) {
            self.collect(c, seen, f);
        }
        f(self.node(id), id);
    }

    pub fn children(&self, id: ExprId) -> Vec<ExprId> {
        match self.node(id) {
            Node::Const(_) | Node::Sym(_) => vec![],
            Node::Op(_, a) | Node::Uf(_, a) => a.clone(),
            Node::Ite(c, a, b) => vec![*c, *a, *b],
            Node::Bytes(parts) => {
                let mut v: Vec<ExprId> = parts.iter().flatten().map(|(w, _)| *w).collect();
                v.dedup();
                v
            }
        }
    }

    /// Concrete value under a model; `None` if some symbol is unassigned.
    pub fn eval(&self, id: ExprId, model: &Model) -> Option<U256> {
        let mut memo = HashMap::new();
        self.eval_memo(id, model, &mut memo)
    }

    fn eval_memo(&self, id: ExprId, model: &Model, memo: &mut HashMap<ExprId, Option<U256>>) -> Option<U256> {
        if let Some(v) = memo.get(&id) {
            return *v;
        }
        let v = match self.node(id) {
            Node::Const(v) => Some(*v),
            Node::Sym(s) => model.get(s).copied(),
            Node::Uf(..) => model.get(&app_key(id)).copied(),
            Node::Op(op, args) => {
                let vals: Option<Vec<U256>> = args.iter().map(|a| self.eval_memo(*a, model, memo)).collect();
                vals.and_then(|v| eval_pure(*op, &v))
            }
            Node::Ite(c, a, b) => {
                let c = self.eval_memo(*c, model, memo)?;
                if c.is_zero() {
                    self.eval_memo(*b, model, memo)
                } else {
                    self.eval_memo(*a, model, memo)
                }
            }
            Node::Bytes(parts) => {
                let mut bytes = [0u8; 32];
                let mut ok = true;
                for (i, p) in parts.iter().enumerate() {
                    if let Some((w, b)) = p {
                        match self.eval_memo(*w, model, memo) {
                            Some(v) => bytes[i] = v.to_be_bytes::<32>()[*b as usize],
                            None => ok = false,
                        }
                    }
                }
                ok.then(|| U256::from_be_bytes(bytes))
            }
        };
        memo.insert(id, v);
        v
    }

    /// SMT-LIB term defining node `id` in terms of `e<child>` names.
    pub fn smt_term(&self, id: ExprId) -> String {
        let e = |i: &ExprId| format!("e{i}");
        match self.node(id) {
            Node::Const(v) => smt_const(*v),
            Node::Sym(s) => smt_name(s),
            Node::Ite(c, a, b) => format!("(ite (= {} {}) {} {})", e(c), ZERO, e(b), e(a)),
            Node::Uf(name, args) => {
                let a: Vec<String> = args.iter().map(e).collect();
                format!("({} {})", uf_name(name, args.len()), a.join(" "))
            }
            Node::Bytes(parts) => {
                let pieces: Vec<String> = parts
                    .iter()
                    .map(|p| match p {
                        None => "#x00".to_string(),
                        Some((w, b)) => {
                            let hi = 255 - 8 * *b as u32;
                            format!("((_ extract {hi} {}) e{w})", hi - 7)
                        }
                    })
                    .collect();
                format!("(concat {})", pieces.join(" "))
            }
            Node::Op(op, args) => {
                let a: Vec<String> = args.iter().map(e).collect();
                smt_op(*op, &a, args, self)
            }
        }
    }
}

pub const ZERO: &str = "#x0000000000000000000000000000000000000000000000000000000000000000";
pub const ONE: &str = "#x0000000000000000000000000000000000000000000000000000000000000001";

pub fn smt_const(v: U256) -> String {
    format!("#x{v:064x}")
}

/// Symbol names are emitted as quoted SMT identifiers.
pub fn smt_name(s: &str) -> String {
    format!("|{s}|")
}

pub fn uf_name(name: &str, arity: usize) -> String {
    format!("uf_{name}_{arity}")
}

fn bool_to_word(cond: String) -> String {
    format!("(ite {cond} {ONE} {ZERO})")
}

fn smt_op(op: Opcode, a: &[String], ids: &[ExprId], pool: &ExprPool) -> String {
    use Opcode::*;
    let guard = |b: &str, t: String| format!("(ite (= {b} {ZERO}) {ZERO} {t})");
    match op {
        Add => format!("(bvadd {} {})", a[0], a[1]),
        Mul => format!("(bvmul {} {})", a[0], a[1]),
        Sub => format!("(bvsub {} {})", a[0], a[1]),
        Div => guard(&a[1], format!("(bvudiv {} {})", a[0], a[1])),
        Sdiv => guard(&a[1], format!("(bvsdiv {} {})", a[0], a[1])),
        Mod => guard(&a[1], format!("(bvurem {} {})", a[0], a[1])),
        Smod => guard(&a[1], format!("(bvsrem {} {})", a[0], a[1])),
        Addmod => guard(
            &a[2],
            format!(
                "((_ extract 255 0) (bvurem (bvadd ((_ zero_extend 1) {}) ((_ zero_extend 1) {})) ((_ zero_extend 1) {})))",
                a[0], a[1], a[2]
            ),
        ),
        Mulmod => guard(
            &a[2],
            format!(
                "((_ extract 255 0) (bvurem (bvmul ((_ zero_extend 256) {}) ((_ zero_extend 256) {})) ((_ zero_extend 256) {})))",
                a[0], a[1], a[2]
            ),
        ),
        Signextend => {
            let b = pool.as_const(ids[0]).unwrap_or(U256::from(31u8));
            if b >= U256::from(31u8) {
                a[1].clone()
            } else {
                let bits = (b.as_limbs()[0] as u32 + 1) * 8;
                format!("((_ sign_extend {}) ((_ extract {} 0) {}))", 256 - bits, bits - 1, a[1])
            }
        }
        Lt => bool_to_word(format!("(bvult {} {})", a[0], a[1])),
        Gt => bool_to_word(format!("(bvugt {} {})", a[0], a[1])),
        Slt => bool_to_word(format!("(bvslt {} {})", a[0], a[1])),
        Sgt => bool_to_word(format!("(bvsgt {} {})", a[0], a[1])),
        Eq => bool_to_word(format!("(= {} {})", a[0], a[1])),
        Iszero => bool_to_word(format!("(= {} {ZERO})", a[0])),
        And => format!("(bvand {} {})", a[0], a[1]),
        Or => format!("(bvor {} {})", a[0], a[1]),
        Xor => format!("(bvxor {} {})", a[0], a[1]),
        Not => format!("(bvnot {})", a[0]),
        Byte => format!(
            "(ite (bvuge {i} {c32}) {ZERO} (bvand (bvlshr {x} (bvmul (bvsub {c31} {i}) {c8})) {cff}))",
            i = a[0],
            x = a[1],
            c32 = smt_const(U256::from(32u8)),
            c31 = smt_const(U256::from(31u8)),
            c8 = smt_const(U256::from(8u8)),
            cff = smt_const(U256::from(255u8)),
        ),
        Shl => format!("(bvshl {} {})", a[1], a[0]),
        Shr => format!("(bvlshr {} {})", a[1], a[0]),
        Sar => format!("(bvashr {} {})", a[1], a[0]),
        other => unreachable!("impure opcode {other} in expression"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_consing_shares_structure() {
        let mut p = ExprPool::new();
        let x = p.sym("CALLER");
        let y = p.sym("CALLER");
        assert_eq!(x, y);
        let a = p.op(Opcode::Add, &[x, y]);
        let b = p.op(Opcode::Add, &[x, y]);
        assert_eq!(a, b);
        let k1 = p.keccak(64, &[a, x]);
        let k2 = p.keccak(64, &[b, y]);
        assert_eq!(k1, k2);
        assert_ne!(k1, p.keccak(32, &[a]));
    }

    #[test]
    fn constants_fold() {
        let mut p = ExprPool::new();
        let a = p.word(7);
        let b = p.word(5);
        let s = p.op(Opcode::Sub, &[a, b]);
        assert_eq!(p.as_const(s), Some(U256::from(2u8)));
        let z = p.word(0);
        let d = p.op(Opcode::Div, &[a, z]);
        assert_eq!(p.as_const(d), Some(U256::ZERO));
    }

    #[test]
    fn constant_keccak_is_real_hash() {
        let mut p = ExprPool::new();
        let w = p.constant(U256::ZERO);
        let h = p.keccak(0, &[w]);
        let expect = U256::from_be_bytes(keccak256(&[]));
        assert_eq!(p.as_const(h), Some(expect));
    }

    #[test]
    fn bytes_of_whole_word_is_the_word() {
        let mut p = ExprPool::new();
        let x = p.sym("x");
        let parts = (0..32).map(|i| Some((x, i as u8))).collect();
        assert_eq!(p.bytes(parts), x);
    }

    #[test]
    fn eval_matches_opcode_semantics() {
        let mut p = ExprPool::new();
        let x = p.sym("x");
        let c = p.word(3);
        let e = p.op(Opcode::Lt, &[x, c]);
        let mut m = Model::new();
        m.insert("x".into(), U256::from(2u8));
        assert_eq!(p.eval(e, &m), Some(U256::from(1u8)));
        m.insert("x".into(), U256::from(9u8));
        assert_eq!(p.eval(e, &m), Some(U256::ZERO));
    }

    #[test]
    fn constant_exponent_expands() {
        let mut p = ExprPool::new();
        let x = p.sym("x");
        let e = p.word(5);
        let r = p.op(Opcode::Exp, &[x, e]);
        let mut m = Model::new();
        m.insert("x".into(), U256::from(3u8));
        assert_eq!(p.eval(r, &m), Some(U256::from(243u32)));
    }
}
