//! Storage model with an undo journal.

use super::expr::{ExprId, ExprPool};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolicRegister {
    entries: BTreeMap<ExprId, ExprId>,
    journal: Vec<(ExprId, Option<ExprId>)>,
    /// Name of the uninterpreted function giving initial contents.
    space: &'static str,
}

/// Position in the journal to roll back to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark(usize);

impl SymbolicRegister {
    pub fn new(space: &'static str) -> SymbolicRegister {
        SymbolicRegister {
            space,
            ..Default::default()
        }
    }

    pub fn entries(&self) -> &BTreeMap<ExprId, ExprId> {
        &self.entries
    }

    pub fn journal(&self) -> &[(ExprId, Option<ExprId>)] {
        &self.journal
    }

    pub fn write(&mut self, key: ExprId, value: ExprId) {
        let prev = self.entries.insert(key, value);
        self.journal.push((key, prev));
    }

    /// Latest write to a key that may alias `key`, else the initial contents.
    pub fn read(&self, pool: &mut ExprPool, key: ExprId) -> ExprId {
        if let Some(v) = self.entries.get(&key) {
            return *v;
        }
        let mut value = pool.uf(self.space, &[key]);
        let key_const = pool.as_const(key);
        // oldest first so the newest write ends up outermost
        let mut writes: Vec<(usize, ExprId, ExprId)> =
            self.entries.iter().map(|(k, v)| (self.last_write(*k), *k, *v)).collect();
        writes.sort_unstable();
        for (_, k, v) in writes {
            if key_const.is_some() && pool.as_const(k).is_some() {
                continue;
            }
            let eq = pool.op(crate::evm::Opcode::Eq, &[key, k]);
            value = pool.ite(eq, v, value);
        }
        value
    }

    fn last_write(&self, k: ExprId) -> usize {
        self.journal.iter().rposition(|(x, _)| *x == k).unwrap_or(0)
    }

    pub fn mark(&self) -> Mark {
        Mark(self.journal.len())
    }

    pub fn rollback(&mut self, m: Mark) {
        while self.journal.len() > m.0 {
            let (k, prev) = self.journal.pop().unwrap();
            match prev {
                Some(v) => {
                    self.entries.insert(k, v);
                }
                None => {
                    self.entries.remove(&k);
                }
            }
        }
    }

    /// Rebuilds the entry map from the journal alone.
    pub fn replay(&self) -> BTreeMap<ExprId, ExprId> {
        let mut out = BTreeMap::new();
        let mut values: Vec<(ExprId, ExprId)> = Vec::new();
        // the value of each write is whatever the next write recorded as its predecessor, or the current entry
        for (i, (k, _)) in self.journal.iter().enumerate() {
            let later = self.journal[i + 1..].iter().find(|(x, _)| x == k);
            let v = match later {
                Some((_, Some(prev))) => *prev,
                _ => self.entries[k],
            };
            values.push((*k, v));
        }
        for (k, v) in values {
            out.insert(k, v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexec::Node;

    #[test]
    fn fork_and_rollback_restore_state() {
        let mut pool = ExprPool::new();
        let mut r = SymbolicRegister::new("sto");
        let k1 = pool.word(1);
        let k2 = pool.sym("key");
        let v1 = pool.word(10);
        let v2 = pool.sym("val");
        r.write(k1, v1);
        let before = r.clone();
        let m = r.mark();
        r.write(k2, v2);
        r.write(k1, v2);
        assert_ne!(r, before);
        r.rollback(m);
        assert_eq!(r, before);
    }

    #[test]
    fn journal_replay_reproduces_entries() {
        let mut pool = ExprPool::new();
        let mut r = SymbolicRegister::new("sto");
        for i in 0..5u64 {
            let k = pool.word(i % 3);
            let v = pool.word(100 + i);
            r.write(k, v);
        }
        assert_eq!(&r.replay(), r.entries());
    }

    #[test]
    fn read_sees_latest_write_or_initial_contents() {
        let mut pool = ExprPool::new();
        let mut r = SymbolicRegister::new("sto");
        let k = pool.word(3);
        let fresh = r.read(&mut pool, k);
        assert!(matches!(pool.node(fresh), Node::Uf(n, _) if n == "sto"));
        let v = pool.word(7);
        r.write(k, v);
        assert_eq!(r.read(&mut pool, k), v);
        // a symbolic key may alias the concrete one
        let s = pool.sym("s");
        let got = r.read(&mut pool, s);
        assert!(matches!(pool.node(got), Node::Ite(..)));
    }
}
