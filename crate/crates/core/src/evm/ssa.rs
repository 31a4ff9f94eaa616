//! Stack-to-SSA conversion.
//!
//! Each block is simulated against an unknown entry stack. Entry slots are
//! materialized lazily as `Phi(block, depth)` values whose incoming edges are
//! filled in as the CFG is discovered.

use super::disasm::Instruction;
use super::opcode::Opcode;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

pub type ValueId = u32;
/// Blocks are identified by their first byte offset.
pub type BlockId = usize;

pub const MAX_STACK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueDef {
    Constant(U256),
    OpResult {
        opcode: Opcode,
        offset: usize,
        operands: Vec<ValueId>,
    },
    Phi {
        block: BlockId,
        depth: usize,
        incoming: BTreeMap<BlockId, ValueId>,
    },
    EnvInput {
        opcode: Opcode,
        offset: usize,
        operands: Vec<ValueId>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsaValue {
    pub id: ValueId,
    pub def: ValueDef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminator {
    Jump { target: ValueId },
    JumpI { target: ValueId, cond: ValueId },
    Fallthrough,
    Stop,
    Return,
    Revert,
    SelfDestruct,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsaBlock {
    pub id: BlockId,
    /// Index range into `SsaProgram::instrs`.
    pub instrs: Range<usize>,
    pub start: usize,
    /// Offset of the last instruction.
    pub end: usize,
    /// Stack inputs per instruction, top of stack first.
    pub operands: Vec<Vec<ValueId>>,
    /// New value produced per instruction, if any.
    pub results: Vec<Option<ValueId>>,
    /// Entry slots consumed; the exit stack is `entry[pops..]` under `exit_top`.
    pub pops: usize,
    /// Values left on top at exit, bottom to top.
    pub exit_top: Vec<ValueId>,
    /// Peak height above `entry_height - pops`.
    pub peak: usize,
    pub terminator: Terminator,
    /// Offset of the next block when control can fall through.
    pub fallthrough: Option<BlockId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsaProgram {
    pub instrs: Vec<Instruction>,
    pub values: Vec<SsaValue>,
    pub blocks: BTreeMap<BlockId, SsaBlock>,
    pub preds: BTreeMap<BlockId, BTreeSet<BlockId>>,
    phis: HashMap<(BlockId, usize), ValueId>,
    /// instruction offset -> index in `instrs`
    by_offset: HashMap<usize, usize>,
}

impl SsaProgram {
    pub fn value(&self, id: ValueId) -> &SsaValue {
        &self.values[id as usize]
    }

    pub fn def(&self, id: ValueId) -> &ValueDef {
        &self.values[id as usize].def
    }

    pub fn instr_at(&self, offset: usize) -> Option<&Instruction> {
        self.by_offset.get(&offset).map(|&i| &self.instrs[i])
    }

    pub fn instr_index(&self, offset: usize) -> Option<usize> {
        self.by_offset.get(&offset).copied()
    }

    pub fn is_jumpdest(&self, offset: usize) -> bool {
        self.instr_at(offset).is_some_and(|i| i.opcode == Opcode::Jumpdest)
    }

    /// Block containing the instruction at `offset`.
    pub fn block_of(&self, offset: usize) -> Option<BlockId> {
        let (&id, b) = self.blocks.range(..=offset).next_back()?;
        (offset <= b.end).then_some(id)
    }

    /// Existing entry-stack placeholder of `block` at `depth`.
    pub fn phi_at(&self, block: BlockId, depth: usize) -> Option<ValueId> {
        self.phis.get(&(block, depth)).copied()
    }

    fn push_value(&mut self, def: ValueDef) -> ValueId {
        let id = self.values.len() as ValueId;
        self.values.push(SsaValue { id, def });
        id
    }

    fn phi_raw(&mut self, block: BlockId, depth: usize) -> (ValueId, bool) {
        if let Some(&v) = self.phis.get(&(block, depth)) {
            return (v, false);
        }
        let v = self.push_value(ValueDef::Phi {
            block,
            depth,
            incoming: BTreeMap::new(),
        });
        self.phis.insert((block, depth), v);
        (v, true)
    }

    /// Entry-stack placeholder of `block` at `depth`, wired to all known predecessors.
    pub fn phi(&mut self, block: BlockId, depth: usize) -> ValueId {
        let (v, fresh) = self.phi_raw(block, depth);
        if fresh {
            self.wire(vec![(v, block, depth)]);
        }
        v
    }

    /// Feeds fresh phis from their predecessors; phis created on the way are queued.
    fn wire(&mut self, mut pending: Vec<(ValueId, BlockId, usize)>) {
        while let Some((v, block, depth)) = pending.pop() {
            if depth >= MAX_STACK {
                continue;
            }
            let preds: Vec<_> = self
                .preds
                .get(&block)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            for p in preds {
                let inc = self.exit_value_raw(p, depth, &mut pending);
                self.set_incoming(v, p, inc);
            }
        }
    }

    fn exit_value_raw(&mut self, block: BlockId, depth: usize, pending: &mut Vec<(ValueId, BlockId, usize)>) -> ValueId {
        let b = &self.blocks[&block];
        let n = b.exit_top.len();
        if depth < n {
            return b.exit_top[n - 1 - depth];
        }
        let d = depth - n + b.pops;
        let (v, fresh) = self.phi_raw(block, d);
        if fresh {
            pending.push((v, block, d));
        }
        v
    }

    fn set_incoming(&mut self, phi: ValueId, pred: BlockId, val: ValueId) {
        if let ValueDef::Phi { incoming, .. } = &mut self.values[phi as usize].def {
            incoming.insert(pred, val);
        }
    }

    /// Value at `depth` (0 = top) of the stack when leaving `block`.
    pub fn exit_value(&mut self, block: BlockId, depth: usize) -> ValueId {
        let mut pending = Vec::new();
        let v = self.exit_value_raw(block, depth, &mut pending);
        self.wire(pending);
        v
    }

    /// Records the CFG edge `from -> to` and feeds existing phis of `to`.
    /// Returns false when the edge was already known.
    pub fn connect(&mut self, from: BlockId, to: BlockId) -> bool {
        if !self.preds.entry(to).or_default().insert(from) {
            return false;
        }
        let depths: Vec<(usize, ValueId)> = self
            .phis
            .iter()
            .filter(|((b, _), _)| *b == to)
            .map(|((_, d), v)| (*d, *v))
            .collect();
        for (d, v) in depths {
            if d < MAX_STACK {
                let inc = self.exit_value(from, d);
                self.set_incoming(v, from, inc);
            }
        }
        true
    }

    /// Looks through copies: a Phi whose incoming values all agree (ignoring
    /// self references) stands for that value.
    pub fn canonical(&self, v: ValueId) -> ValueId {
        let mut seen = BTreeSet::new();
        let mut leaf: Option<ValueId> = None;
        let mut work = vec![v];
        while let Some(x) = work.pop() {
            match self.def(x) {
                ValueDef::Phi { incoming, .. } => {
                    if seen.insert(x) {
                        work.extend(incoming.values().copied());
                    }
                }
                _ => match leaf {
                    None => leaf = Some(x),
                    Some(l) if l == x => {}
                    Some(_) => return v,
                },
            }
        }
        leaf.unwrap_or(v)
    }
}

fn leaders(instrs: &[Instruction]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    if instrs.is_empty() {
        return out;
    }
    out.insert(0);
    for (i, ins) in instrs.iter().enumerate() {
        if ins.opcode == Opcode::Jumpdest {
            out.insert(i);
        }
        if ins.opcode.is_terminator() && i + 1 < instrs.len() {
            out.insert(i + 1);
        }
    }
    out
}

/// Partitions `instrs` into blocks and expresses each block's stack effect as SSA values.
pub fn to_ssa(instrs: Vec<Instruction>) -> SsaProgram {
    let mut prog = SsaProgram {
        by_offset: instrs.iter().enumerate().map(|(i, x)| (x.offset, i)).collect(),
        instrs,
        ..Default::default()
    };
    let lead: Vec<usize> = leaders(&prog.instrs).into_iter().collect();
    for (k, &first) in lead.iter().enumerate() {
        let last = lead.get(k + 1).map_or(prog.instrs.len(), |&n| n);
        let block = build_block(&mut prog, first..last);
        prog.blocks.insert(block.id, block);
    }
    prog
}

fn build_block(prog: &mut SsaProgram, range: Range<usize>) -> SsaBlock {
    let id = prog.instrs[range.start].offset;
    let mut st: Vec<ValueId> = Vec::new();
    let mut materialized = 0usize;
    let mut peak = 0usize;
    let mut operands_all = Vec::with_capacity(range.len());
    let mut results = Vec::with_capacity(range.len());
    let mut terminator = None;

    for idx in range.clone() {
        let ins = prog.instrs[idx].clone();
        let op = ins.opcode;
        let need = match (op.dup_depth(), op.swap_depth()) {
            (Some(n), _) => n,
            (_, Some(n)) => n + 1,
            _ => op.stack_in() as usize,
        };
        while st.len() < need {
            let v = prog.phi_raw(id, materialized).0;
            materialized += 1;
            st.insert(0, v);
        }
        let mut result = None;
        let mut operands = Vec::new();
        if let Some(n) = op.dup_depth() {
            let v = st[st.len() - n];
            operands.push(v);
            st.push(v);
        } else if let Some(n) = op.swap_depth() {
            let top = st.len() - 1;
            operands.push(st[top]);
            operands.push(st[top - n]);
            st.swap(top, top - n);
        } else {
            for _ in 0..op.stack_in() {
                operands.push(st.pop().expect("materialized"));
            }
            if op.is_push() {
                let v = prog.push_value(ValueDef::Constant(ins.push_value().unwrap_or_default()));
                result = Some(v);
                st.push(v);
            } else if op.stack_out() == 1 {
                let def = if op.is_env_input() {
                    ValueDef::EnvInput {
                        opcode: op,
                        offset: ins.offset,
                        operands: operands.clone(),
                    }
                } else {
                    ValueDef::OpResult {
                        opcode: op,
                        offset: ins.offset,
                        operands: operands.clone(),
                    }
                };
                let v = prog.push_value(def);
                result = Some(v);
                st.push(v);
            }
        }
        peak = peak.max(st.len());
        match op {
            Opcode::Jump => terminator = Some(Terminator::Jump { target: operands[0] }),
            Opcode::Jumpi => {
                terminator = Some(Terminator::JumpI {
                    target: operands[0],
                    cond: operands[1],
                })
            }
            Opcode::Stop => terminator = Some(Terminator::Stop),
            Opcode::Return => terminator = Some(Terminator::Return),
            Opcode::Revert => terminator = Some(Terminator::Revert),
            Opcode::Selfdestruct => terminator = Some(Terminator::SelfDestruct),
            Opcode::Invalid => terminator = Some(Terminator::Invalid),
            _ => {}
        }
        operands_all.push(operands);
        results.push(result);
    }

    let next = prog.instrs.get(range.end).map(|i| i.offset);
    let (terminator, fallthrough) = match terminator {
        Some(t @ Terminator::JumpI { .. }) => (t, next),
        Some(t) => (t, None),
        // running off the end of code halts
        None if next.is_none() => (Terminator::Stop, None),
        None => (Terminator::Fallthrough, next),
    };
    SsaBlock {
        id,
        start: id,
        end: prog.instrs[range.end - 1].offset,
        instrs: range,
        operands: operands_all,
        results,
        pops: materialized,
        peak: peak.saturating_sub(materialized),
        exit_top: st,
        terminator,
        fallthrough,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::disasm::disassemble;

    fn prog(code: &[u8]) -> SsaProgram {
        to_ssa(disassemble(code).unwrap())
    }

    #[test]
    fn add_uses_both_constants() {
        let p = prog(&[0x60, 0x01, 0x60, 0x02, 0x01]);
        let b = &p.blocks[&0];
        let add_ops = &b.operands[2];
        assert_eq!(p.def(add_ops[0]), &ValueDef::Constant(U256::from(2)));
        assert_eq!(p.def(add_ops[1]), &ValueDef::Constant(U256::from(1)));
        let r = b.results[2].unwrap();
        assert!(matches!(p.def(r), ValueDef::OpResult { opcode: Opcode::Add, .. }));
        assert_eq!(b.exit_top, vec![r]);
    }

    #[test]
    fn dup_repeats_top_id() {
        let p = prog(&[0x60, 0x07, 0x80]);
        let b = &p.blocks[&0];
        assert_eq!(b.exit_top.len(), 2);
        assert_eq!(b.exit_top[0], b.exit_top[1]);
        assert_eq!(p.values.len(), 1);
    }

    #[test]
    fn chainid_is_env_input() {
        let p = prog(&[0x46]);
        assert!(matches!(
            p.def(0),
            ValueDef::EnvInput {
                opcode: Opcode::Chainid,
                ..
            }
        ));
    }

    #[test]
    fn entry_slots_become_phis() {
        // POP ADD on an empty local stack reads three entry slots
        let p = prog(&[0x50, 0x01]);
        let b = &p.blocks[&0];
        assert_eq!(b.pops, 3);
        assert_eq!(b.exit_top.len(), 1);
        for v in &b.operands[1] {
            assert!(matches!(p.def(*v), ValueDef::Phi { .. }));
        }
    }

    #[test]
    fn blocks_split_at_jumpdest_and_terminators() {
        // PUSH1 4 JUMP STOP JUMPDEST STOP
        let p = prog(&[0x60, 0x04, 0x56, 0x00, 0x5b, 0x00]);
        let ids: Vec<_> = p.blocks.keys().copied().collect();
        assert_eq!(ids, vec![0, 3, 4]);
        assert_eq!(p.block_of(1), Some(0));
        assert_eq!(p.block_of(5), Some(4));
    }
}
