use super::expr::{ExprId, ExprPool};
use super::register::SymbolicRegister;
use crate::evm::BlockId;
use std::collections::BTreeMap;

/// Largest concrete memory region modeled byte by byte.
pub const MAX_CONCRETE_SPAN: u64 = 1 << 16;
const MAX_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub cond: ExprId,
    /// Whether the condition word was nonzero on this path.
    pub taken: bool,
    /// Bytecode offset of the branch (or `usize::MAX` for entry assumptions).
    pub offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    bytes: BTreeMap<u64, (ExprId, u8)>,
    /// Set once a write lands at an unknown offset; older contents are then forgotten.
    pub havocked: bool,
}

impl Memory {
    pub fn concrete(offset: Option<u64>, len: u64) -> Option<u64> {
        offset.filter(|o| *o < MAX_OFFSET && len <= MAX_CONCRETE_SPAN)
    }

    pub fn byte(&self, at: u64) -> Option<(ExprId, u8)> {
        self.bytes.get(&at).copied()
    }

    pub fn set_byte(&mut self, at: u64, b: Option<(ExprId, u8)>) {
        match b {
            Some(x) => {
                self.bytes.insert(at, x);
            }
            None => {
                self.bytes.remove(&at);
            }
        }
    }

    /// Word at a concrete offset; `None` when the contents were havocked.
    pub fn read_word(&self, pool: &mut ExprPool, at: u64) -> Option<ExprId> {
        let parts: Vec<Option<(ExprId, u8)>> = (0..32).map(|i| self.byte(at + i)).collect();
        if self.havocked && parts.iter().any(Option::is_none) {
            return None;
        }
        Some(pool.bytes(parts))
    }

    pub fn write_word(&mut self, at: u64, w: ExprId) {
        for i in 0..32u64 {
            self.bytes.insert(at + i, (w, i as u8));
        }
    }

    pub fn havoc(&mut self) {
        self.bytes.clear();
        self.havocked = true;
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SymbolicState {
    pub block: BlockId,
    /// Instruction index into the program.
    pub cursor: usize,
    pub stack: Vec<ExprId>,
    pub memory: Memory,
    pub storage: SymbolicRegister,
    pub transient: SymbolicRegister,
    pub path_condition: Vec<Constraint>,
    pub call_depth: u32,
    /// Visits per (block, return context).
    pub loop_counters: BTreeMap<(BlockId, u64), u32>,
    pub returndata_size: Option<ExprId>,
    /// Blocks entered, in order.
    pub trace: Vec<BlockId>,
    /// Expression store for every id in this state.
    pub pool: ExprPool,
}

impl SymbolicState {
    pub fn conjuncts(&self) -> Vec<(ExprId, bool)> {
        self.path_condition.iter().map(|c| (c.cond, c.taken)).collect()
    }

    /// Stack item `depth` below the top (0 = top).
    pub fn peek(&self, depth: usize) -> Option<ExprId> {
        self.stack.len().checked_sub(depth + 1).map(|i| self.stack[i])
    }

    pub fn mem_word(&mut self, at: u64) -> Option<ExprId> {
        let mut pool = std::mem::take(&mut self.pool);
        let w = self.memory.read_word(&mut pool, at);
        self.pool = pool;
        w
    }
}
