//! Guided depth-first symbolic execution over the recovered CFG.

use super::expr::{ExprId, ExprPool};
use super::register::{Mark, SymbolicRegister};
use super::solver::{SatResult, Session};
use super::state::{Constraint, Memory, SymbolicState};
use crate::artifact::{CompilationArtifact, SrcRange};
use crate::evm::arith::is_pure;
use crate::evm::{BlockId, Cfg, DisasmError, Opcode};
use ruint::aliases::U256;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::time::Instant;

pub const DEFAULT_UNROLL: u32 = 2;
pub const DEFAULT_MAX_STEPS: usize = 400_000;
const MAX_STACK: usize = 1024;

/// Runtime bytecode together with its recovered CFG and source mapping.
#[derive(Debug)]
pub struct Program {
    pub cfg: Cfg,
    /// Full deployed code (CODECOPY reads from it).
    pub code: Vec<u8>,
    /// Source range per instruction index.
    pub src: Vec<Option<SrcRange>>,
    /// Offsets of immediates that the deployer patches with immutable values.
    pub immutables: BTreeSet<usize>,
}

impl Program {
    pub fn from_bytecode(code: &[u8]) -> Result<Program, DisasmError> {
        let cfg = Cfg::from_bytecode(code)?;
        let n = cfg.ssa.instrs.len();
        Ok(Program {
            cfg,
            code: code.to_vec(),
            src: vec![None; n],
            immutables: BTreeSet::new(),
        })
    }

    pub fn from_artifact(a: &CompilationArtifact) -> Result<Program, DisasmError> {
        let mut p = Program::from_bytecode(&a.deployed_bytecode)?;
        for (i, e) in a.source_map.iter().enumerate().take(p.src.len()) {
            p.src[i] = e.range;
        }
        p.immutables = a
            .immutable_references
            .values()
            .flatten()
            .map(|(start, _)| *start)
            .collect();
        Ok(p)
    }

    /// Offsets of instructions satisfying `pred` whose source range lies inside `range`.
    pub fn offsets_within(&self, range: &SrcRange, pred: impl Fn(Opcode) -> bool) -> BTreeSet<usize> {
        self.cfg
            .ssa
            .instrs
            .iter()
            .enumerate()
            .filter(|(i, ins)| {
                pred(ins.opcode)
                    && self.src[*i].is_some_and(|r| r.file == range.file && r.start >= range.start && r.end() <= range.end())
            })
            .map(|(_, ins)| ins.offset)
            .collect()
    }

    fn block_overlaps(&self, block: BlockId, prefer: &[SrcRange]) -> bool {
        let Some(b) = self.cfg.ssa.blocks.get(&block) else { return false };
        b.instrs
            .clone()
            .any(|i| self.src.get(i).copied().flatten().is_some_and(|r| prefer.iter().any(|p| overlaps(p, &r))))
    }
}

fn overlaps(a: &SrcRange, b: &SrcRange) -> bool {
    a.file == b.file && a.start < b.end() && b.start < a.end()
}

#[derive(Clone, Debug, Default)]
pub struct Guidance {
    /// Bytecode offsets at which execution stops successfully.
    pub targets: BTreeSet<usize>,
    /// Source ranges of the candidate path; branches into them are tried first.
    pub prefer: Vec<SrcRange>,
}

#[derive(Clone, Debug)]
pub struct ExecConfig {
    /// Re-entries allowed per loop header.
    pub unroll: u32,
    pub max_steps: usize,
    pub deadline: Option<Instant>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            unroll: DEFAULT_UNROLL,
            max_steps: DEFAULT_MAX_STEPS,
            deadline: None,
        }
    }
}

#[derive(Debug)]
pub enum PathOutcome {
    Reached(Box<SymbolicState>),
    Divergence { explored: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("budget exhausted after {0} states")]
    BudgetExhausted(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExecDiagnostic {
    UnresolvedJump { offset: usize },
    LoopBound { block: BlockId },
    SolverGaveUp { offset: usize },
}

enum Flow {
    Next,
    Goto(usize),
    Branch { cond: ExprId, target: usize },
    Halt,
}

struct Pending {
    mark: Mark,
    tmark: Mark,
    state: SymbolicState,
    check: bool,
}

pub struct Executor<'a> {
    prog: &'a Program,
    pool: ExprPool,
    storage: SymbolicRegister,
    transient: SymbolicRegister,
    fresh: u64,
    steps: usize,
    explored: usize,
    distance: BTreeMap<BlockId, usize>,
    pub diagnostics: BTreeSet<ExecDiagnostic>,
}

pub fn execute_path(
    prog: &Program,
    selector: Option<u32>,
    guidance: &Guidance,
    config: &ExecConfig,
    solver: Option<&mut Session>,
) -> Result<PathOutcome, ExecError> {
    Executor::new(prog).run(selector, guidance, config, solver)
}

impl<'a> Executor<'a> {
    pub fn new(prog: &'a Program) -> Executor<'a> {
        Executor {
            prog,
            pool: ExprPool::new(),
            storage: SymbolicRegister::new("sto"),
            transient: SymbolicRegister::new("tsto"),
            fresh: 0,
            steps: 0,
            explored: 0,
            distance: BTreeMap::new(),
            diagnostics: BTreeSet::new(),
        }
    }

    fn fresh(&mut self, tag: &str) -> ExprId {
        self.fresh += 1;
        let name = format!("{tag}_{}", self.fresh);
        self.pool.sym(&name)
    }

    pub fn run(
        &mut self,
        selector: Option<u32>,
        guidance: &Guidance,
        config: &ExecConfig,
        mut solver: Option<&mut Session>,
    ) -> Result<PathOutcome, ExecError> {
        for t in &guidance.targets {
            if let Some(b) = self.prog.cfg.block_of(*t) {
                for (blk, d) in self.prog.cfg.distances_to(b) {
                    let e = self.distance.entry(blk).or_insert(usize::MAX);
                    *e = (*e).min(d);
                }
            }
        }
        let mut init = SymbolicState::default();
        if let Some(sel) = selector {
            let cd0 = self.pool.sym("cd_0");
            let k = self.pool.word(224);
            let shr = self.pool.op(Opcode::Shr, &[k, cd0]);
            let want = self.pool.word(sel as u64);
            let eq = self.pool.op(Opcode::Eq, &[shr, want]);
            init.path_condition.push(Constraint {
                cond: eq,
                taken: true,
                offset: usize::MAX,
            });
            let size = self.pool.sym("CALLDATASIZE");
            let four = self.pool.word(4);
            let short = self.pool.op(Opcode::Lt, &[size, four]);
            init.path_condition.push(Constraint {
                cond: short,
                taken: false,
                offset: usize::MAX,
            });
        }
        init.trace.push(0);
        let mut pending = vec![Pending {
            mark: self.storage.mark(),
            tmark: self.transient.mark(),
            state: init,
            check: false,
        }];
        let instrs = &self.prog.cfg.ssa.instrs;
        while let Some(p) = pending.pop() {
            self.storage.rollback(p.mark);
            self.transient.rollback(p.tmark);
            let mut st = p.state;
            self.explored += 1;
            if p.check {
                if let Some(s) = solver.as_deref_mut() {
                    match s.check(&self.pool, &st.conjuncts()) {
                        Ok(SatResult::Unsat) => continue,
                        Ok(SatResult::Sat) => {}
                        _ => {
                            let off = st.path_condition.last().map_or(0, |c| c.offset);
                            self.diagnostics.insert(ExecDiagnostic::SolverGaveUp { offset: off });
                        }
                    }
                }
            }
            loop {
                self.steps += 1;
                if self.steps > config.max_steps || config.deadline.is_some_and(|d| Instant::now() >= d) {
                    return Err(ExecError::BudgetExhausted(self.explored));
                }
                let Some(ins) = instrs.get(st.cursor) else { break };
                let offset = ins.offset;
                if ins.opcode == Opcode::Jumpdest && !self.count_visit(&mut st, offset, config.unroll) {
                    break;
                }
                if guidance.targets.contains(&offset) {
                    st.storage = self.storage.clone();
                    st.transient = self.transient.clone();
                    st.pool = std::mem::take(&mut self.pool);
                    return Ok(PathOutcome::Reached(Box::new(st)));
                }
                match self.step(&mut st) {
                    Flow::Next => st.cursor += 1,
                    Flow::Goto(t) => {
                        if !self.jump(&mut st, t) {
                            break;
                        }
                    }
                    Flow::Branch { cond, target } => {
                        let fall = ins.next_offset();
                        let mut taken = st.clone();
                        taken.path_condition.push(Constraint { cond, taken: true, offset });
                        let mut not = st;
                        not.path_condition.push(Constraint { cond, taken: false, offset });
                        let mut options = Vec::new();
                        if self.jump(&mut taken, target) {
                            options.push((self.preference(target, guidance), taken));
                        }
                        if let Some(i) = self.prog.cfg.ssa.instr_index(fall) {
                            not.cursor = i;
                            not.block = fall;
                            not.trace.push(fall);
                            options.push((self.preference(fall, guidance), not));
                        }
                        // least preferred first: the stack pops the best option next
                        options.sort_by(|a, b| b.0.cmp(&a.0));
                        for (_, s) in options {
                            pending.push(Pending {
                                mark: self.storage.mark(),
                                tmark: self.transient.mark(),
                                state: s,
                                check: true,
                            });
                        }
                        break;
                    }
                    Flow::Halt => break,
                }
            }
        }
        Ok(PathOutcome::Divergence { explored: self.explored })
    }

    fn preference(&self, offset: usize, g: &Guidance) -> (usize, bool) {
        let block = self.prog.cfg.block_of(offset).unwrap_or(offset);
        let d = self.distance.get(&block).copied().unwrap_or(usize::MAX);
        (d, !self.prog.block_overlaps(block, &g.prefer))
    }

    fn count_visit(&mut self, st: &mut SymbolicState, offset: usize, unroll: u32) -> bool {
        let mut h = DefaultHasher::new();
        for v in &st.stack {
            if let Some(c) = self.pool.as_const(*v) {
                if c < U256::from(self.prog.code.len()) && self.prog.cfg.ssa.is_jumpdest(c.as_limbs()[0] as usize) {
                    c.hash(&mut h);
                }
            }
        }
        let key = (offset, h.finish());
        let n = st.loop_counters.entry(key).or_insert(0);
        *n += 1;
        if *n > unroll + 1 {
            self.diagnostics.insert(ExecDiagnostic::LoopBound { block: offset });
            return false;
        }
        true
    }

    fn jump(&mut self, st: &mut SymbolicState, target: usize) -> bool {
        if !self.prog.cfg.ssa.is_jumpdest(target) {
            return false;
        }
        match self.prog.cfg.ssa.instr_index(target) {
            Some(i) => {
                st.cursor = i;
                st.block = target;
                st.trace.push(target);
                true
            }
            None => false,
        }
    }

    fn concrete(&self, e: ExprId) -> Option<u64> {
        self.pool.as_const(e).and_then(|v| u64::try_from(v).ok())
    }

    fn step(&mut self, st: &mut SymbolicState) -> Flow {
        let ins = &self.prog.cfg.ssa.instrs[st.cursor];
        let op = ins.opcode;
        let offset = ins.offset;
        if st.stack.len() < op.stack_in() as usize {
            return Flow::Halt;
        }
        if st.stack.len() - op.stack_in() as usize + op.stack_out() as usize > MAX_STACK {
            return Flow::Halt;
        }
        if op.is_push() {
            let v = if op.push_width() == 32 && self.prog.immutables.contains(&(offset + 1)) {
                self.pool.sym(&format!("immutable_{}", offset + 1))
            } else {
                let c = ins.push_value().unwrap_or(U256::ZERO);
                self.pool.constant(c)
            };
            st.stack.push(v);
            return Flow::Next;
        }
        if let Some(d) = op.dup_depth() {
            let v = st.stack[st.stack.len() - d];
            st.stack.push(v);
            return Flow::Next;
        }
        if let Some(d) = op.swap_depth() {
            let n = st.stack.len();
            st.stack.swap(n - 1, n - 1 - d);
            return Flow::Next;
        }
        let args: Vec<ExprId> = (0..op.stack_in()).map(|_| st.stack.pop().unwrap()).collect();
        if is_pure(op) {
            let r = self.pool.op(op, &args);
            st.stack.push(r);
            return Flow::Next;
        }
        use Opcode::*;
        match op {
            Stop | Return | Revert | Invalid | Selfdestruct => return Flow::Halt,
            Jumpdest | Pop => {}
            Jump => {
                return match self.concrete(args[0]) {
                    Some(t) => Flow::Goto(t as usize),
                    None => {
                        self.diagnostics.insert(ExecDiagnostic::UnresolvedJump { offset });
                        Flow::Halt
                    }
                }
            }
            Jumpi => {
                let Some(t) = self.concrete(args[0]) else {
                    self.diagnostics.insert(ExecDiagnostic::UnresolvedJump { offset });
                    return Flow::Halt;
                };
                return match self.pool.as_const(args[1]) {
                    Some(c) if c.is_zero() => Flow::Next,
                    Some(_) => Flow::Goto(t as usize),
                    None => Flow::Branch {
                        cond: args[1],
                        target: t as usize,
                    },
                };
            }
            Address | Origin | Caller | Callvalue | Calldatasize | Gasprice | Coinbase | Timestamp | Number
            | Prevrandao | Gaslimit | Chainid | Selfbalance | Basefee | Blobbasefee => {
                let s = self.pool.sym(op.name());
                st.stack.push(s);
            }
            Gas => {
                let s = self.fresh("GAS");
                st.stack.push(s);
            }
            Msize => {
                let s = self.fresh("MSIZE");
                st.stack.push(s);
            }
            Pc => {
                let c = self.pool.word(offset as u64);
                st.stack.push(c);
            }
            Codesize => {
                let c = self.pool.word(self.prog.code.len() as u64);
                st.stack.push(c);
            }
            Returndatasize => {
                let v = match st.returndata_size {
                    Some(v) => v,
                    None => self.pool.word(0),
                };
                st.stack.push(v);
            }
            Balance | Extcodesize | Extcodehash | Blockhash | Blobhash => {
                let name = op.name().to_lowercase();
                let v = self.pool.uf(&name, &args);
                st.stack.push(v);
            }
            Calldataload => {
                let v = self.calldata_word(args[0], 0);
                st.stack.push(v);
            }
            Calldatacopy => {
                let (dst, off, len) = (args[0], args[1], args[2]);
                match (Memory::concrete(self.concrete(dst), self.concrete(len).unwrap_or(u64::MAX)), self.concrete(len)) {
                    (Some(d), Some(l)) => {
                        for j in 0..l.div_ceil(32) {
                            let w = self.calldata_word(off, j * 32);
                            for i in 0..32u64.min(l - j * 32) {
                                st.memory.set_byte(d + j * 32 + i, Some((w, i as u8)));
                            }
                        }
                    }
                    _ => st.memory.havoc(),
                }
            }
            Codecopy => {
                let (dst, off, len) = (args[0], args[1], args[2]);
                match (
                    Memory::concrete(self.concrete(dst), self.concrete(len).unwrap_or(u64::MAX)),
                    self.concrete(off),
                    self.concrete(len),
                ) {
                    (Some(d), Some(o), Some(l)) => {
                        for i in 0..l {
                            let b = self.prog.code.get((o + i) as usize).copied().unwrap_or(0);
                            let w = self.pool.word(b as u64);
                            st.memory.set_byte(d + i, Some((w, 31)));
                        }
                    }
                    _ => st.memory.havoc(),
                }
            }
            Extcodecopy => self.fill_fresh(st, args[1], args[3], "extcode"),
            Returndatacopy => self.fill_fresh(st, args[0], args[2], "retcopy"),
            Mload => {
                let v = match self.concrete(args[0]).filter(|o| *o < 1 << 32) {
                    Some(o) => match st.memory.read_word(&mut self.pool, o) {
                        Some(v) => v,
                        None => self.fresh("mem"),
                    },
                    None => self.fresh("mem"),
                };
                st.stack.push(v);
            }
            Mstore => match self.concrete(args[0]).filter(|o| *o < 1 << 32) {
                Some(o) => st.memory.write_word(o, args[1]),
                None => st.memory.havoc(),
            },
            Mstore8 => match self.concrete(args[0]).filter(|o| *o < 1 << 32) {
                Some(o) => st.memory.set_byte(o, Some((args[1], 31))),
                None => st.memory.havoc(),
            },
            Mcopy => {
                let (dst, src, len) = (args[0], args[1], args[2]);
                let l = self.concrete(len);
                match (
                    Memory::concrete(self.concrete(dst), l.unwrap_or(u64::MAX)),
                    Memory::concrete(self.concrete(src), l.unwrap_or(u64::MAX)),
                    l,
                ) {
                    (Some(d), Some(s), Some(l)) => {
                        let bytes: Vec<_> = (0..l).map(|i| st.memory.byte(s + i)).collect();
                        if st.memory.havocked && bytes.iter().any(Option::is_none) {
                            st.memory.havoc();
                        } else {
                            for (i, b) in bytes.into_iter().enumerate() {
                                st.memory.set_byte(d + i as u64, b);
                            }
                        }
                    }
                    _ => st.memory.havoc(),
                }
            }
            Keccak256 => {
                let v = self.hash_region(st, args[0], args[1]);
                st.stack.push(v);
            }
            Sload => {
                let v = self.storage.read(&mut self.pool, args[0]);
                st.stack.push(v);
            }
            Sstore => self.storage.write(args[0], args[1]),
            Tload => {
                let v = self.transient.read(&mut self.pool, args[0]);
                st.stack.push(v);
            }
            Tstore => self.transient.write(args[0], args[1]),
            Log0 | Log1 | Log2 | Log3 | Log4 => {}
            Create | Create2 => {
                let v = self.fresh("create");
                st.stack.push(v);
                st.returndata_size = Some(self.fresh("rds"));
            }
            Call | Callcode | Delegatecall | Staticcall => {
                let (ret_off, ret_len) = if matches!(op, Call | Callcode) {
                    (args[5], args[6])
                } else {
                    (args[4], args[5])
                };
                self.fill_fresh(st, ret_off, ret_len, "ret");
                let ok = self.fresh("call_ok");
                st.stack.push(ok);
                st.returndata_size = Some(self.fresh("rds"));
                st.call_depth = st.call_depth.max(1);
            }
            _ => return Flow::Halt,
        }
        Flow::Next
    }

    fn calldata_word(&mut self, off: ExprId, delta: u64) -> ExprId {
        match self.concrete(off) {
            Some(o) => self.pool.sym(&format!("cd_{}", o + delta)),
            None => {
                let d = self.pool.word(delta);
                let at = self.pool.op(Opcode::Add, &[off, d]);
                self.pool.uf("cdload", &[at])
            }
        }
    }

    fn fill_fresh(&mut self, st: &mut SymbolicState, dst: ExprId, len: ExprId, tag: &str) {
        match (Memory::concrete(self.concrete(dst), self.concrete(len).unwrap_or(u64::MAX)), self.concrete(len)) {
            (Some(d), Some(l)) => {
                for j in 0..l.div_ceil(32) {
                    let w = self.fresh(tag);
                    for i in 0..32u64.min(l - j * 32) {
                        st.memory.set_byte(d + j * 32 + i, Some((w, i as u8)));
                    }
                }
            }
            _ => st.memory.havoc(),
        }
    }

    fn hash_region(&mut self, st: &mut SymbolicState, off: ExprId, len: ExprId) -> ExprId {
        let l = self.concrete(len);
        let Some(o) = Memory::concrete(self.concrete(off), l.unwrap_or(u64::MAX)) else {
            return self.pool.uf("keccak_region", &[off, len]);
        };
        let l = l.unwrap();
        let mut chunks = Vec::new();
        for j in 0..l.div_ceil(32) {
            let mut parts = Vec::with_capacity(32);
            for i in 0..32u64 {
                let at = o + j * 32 + i;
                if j * 32 + i >= l {
                    parts.push(None);
                    continue;
                }
                match st.memory.byte(at) {
                    Some(b) => parts.push(Some(b)),
                    None if st.memory.havocked => return self.fresh("hash"),
                    None => parts.push(None),
                }
            }
            chunks.push(self.pool.bytes(parts));
        }
        self.pool.keccak(l as usize, &chunks)
    }
}
