use equivguard::evm::Cfg;
use ruint::aliases::U256;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum W {
    K(U256),
    U,
}

/// (pops, pushes, halts) for every defined opcode.
fn effect(op: u8) -> Option<(usize, usize, bool)> {
    Some(match op {
        0x00 => (0, 0, true),
        0x01..=0x07 | 0x0a | 0x0b => (2, 1, false),
        0x08 | 0x09 => (3, 1, false),
        0x10..=0x14 | 0x16..=0x18 | 0x1a..=0x1d => (2, 1, false),
        0x15 | 0x19 => (1, 1, false),
        0x20 => (2, 1, false),
        0x30 | 0x32..=0x34 | 0x36 | 0x38 | 0x3a | 0x3d => (0, 1, false),
        0x31 | 0x35 | 0x3b | 0x3f => (1, 1, false),
        0x37 | 0x39 | 0x3e => (3, 0, false),
        0x3c => (4, 0, false),
        0x40 | 0x49 => (1, 1, false),
        0x41..=0x48 | 0x4a => (0, 1, false),
        0x50 => (1, 0, false),
        0x51 | 0x54 | 0x5c => (1, 1, false),
        0x52 | 0x53 | 0x55 | 0x5d => (2, 0, false),
        0x56 => (1, 0, false),
        0x57 => (2, 0, false),
        0x58 | 0x59 | 0x5a | 0x5f => (0, 1, false),
        0x5b => (0, 0, false),
        0x5e => (3, 0, false),
        0x60..=0x7f => (0, 1, false),
        0x80..=0x8f => (0, 1, false),
        0x90..=0x9f => (0, 0, false),
        0xa0..=0xa4 => (2 + (op - 0xa0) as usize, 0, false),
        0xf0 => (3, 1, false),
        0xf1 | 0xf2 => (7, 1, false),
        0xf3 | 0xfd => (2, 0, true),
        0xf4 | 0xfa => (6, 1, false),
        0xf5 => (4, 1, false),
        0xfe => (0, 0, true),
        0xff => (1, 0, true),
        _ => return None,
    })
}

fn fold(op: u8, a: &[W]) -> W {
    let k: Vec<U256> = match a.iter().map(|w| if let W::K(v) = w { Some(*v) } else { None }).collect() {
        Some(k) => k,
        None => return W::U,
    };
    let b = |x: bool| if x { U256::from(1) } else { U256::ZERO };
    W::K(match op {
        0x01 => k[0].wrapping_add(k[1]),
        0x02 => k[0].wrapping_mul(k[1]),
        0x03 => k[0].wrapping_sub(k[1]),
        0x04 => k[0].checked_div(k[1]).unwrap_or(U256::ZERO),
        0x10 => b(k[0] < k[1]),
        0x11 => b(k[0] > k[1]),
        0x14 => b(k[0] == k[1]),
        0x15 => b(k[0].is_zero()),
        0x16 => k[0] & k[1],
        0x17 => k[0] | k[1],
        0x18 => k[0] ^ k[1],
        0x19 => !k[0],
        0x1b => {
            if k[0] >= U256::from(256) {
                U256::ZERO
            } else {
                k[1] << k[0].to::<usize>()
            }
        }
        0x1c => {
            if k[0] >= U256::from(256) {
                U256::ZERO
            } else {
                k[1] >> k[0].to::<usize>()
            }
        }
        _ => return W::U,
    })
}

pub struct Trace {
    /// Constant targets seen at each executed jump.
    pub known: BTreeMap<usize, BTreeSet<U256>>,
    /// Jumps executed at least once with a non-constant target.
    pub opaque: BTreeSet<usize>,
    pub jumpdests: HashSet<usize>,
}

const PLAIN_VISITS: usize = 48;

/// Explores every path of `code` over a constant/unknown stack. Once a
/// location has been entered often, constants other than code pointers are
/// forgotten there.
pub fn emulate(code: &[u8]) -> Trace {
    let mut jumpdests = HashSet::new();
    let mut i = 0;
    while i < code.len() {
        let op = code[i];
        if op == 0x5b {
            jumpdests.insert(i);
        }
        i += 1 + if (0x60..=0x7f).contains(&op) { (op - 0x5f) as usize } else { 0 };
    }
    let mut trace = Trace {
        known: BTreeMap::new(),
        opaque: BTreeSet::new(),
        jumpdests: jumpdests.clone(),
    };
    let mut seen: HashSet<(usize, Vec<W>)> = HashSet::new();
    let mut visits: HashMap<usize, usize> = HashMap::new();
    let mut work: Vec<(usize, Vec<W>)> = vec![(0, Vec::new())];
    while let Some((pc, mut stack)) = work.pop() {
        let n = visits.entry(pc).or_default();
        *n += 1;
        if *n > PLAIN_VISITS {
            for w in stack.iter_mut() {
                if !matches!(w, W::K(v) if usize::try_from(*v).is_ok_and(|t| jumpdests.contains(&t))) {
                    *w = W::U;
                }
            }
        }
        if !seen.insert((pc, stack.clone())) {
            continue;
        }
        let mut pc = pc;
        loop {
            let Some(&op) = code.get(pc) else { break };
            let Some((pops, pushes, halts)) = effect(op) else { break };
            let need = match op {
                0x80..=0x8f => (op - 0x7f) as usize,
                0x90..=0x9f => (op - 0x8e) as usize,
                _ => pops,
            };
            if stack.len() < need || halts {
                break;
            }
            let top = stack.len();
            match op {
                0x5f => stack.push(W::K(U256::ZERO)),
                0x60..=0x7f => {
                    let w = (op - 0x5f) as usize;
                    let mut bytes = [0u8; 32];
                    let imm = &code[(pc + 1).min(code.len())..(pc + 1 + w).min(code.len())];
                    bytes[32 - w..32 - w + imm.len()].copy_from_slice(imm);
                    stack.push(W::K(U256::from_be_bytes(bytes)));
                    pc += 1 + w;
                    continue;
                }
                0x80..=0x8f => stack.push(stack[top - need]),
                0x90..=0x9f => stack.swap(top - 1, top - need),
                0x56 | 0x57 => {
                    let target = stack.pop().unwrap();
                    if op == 0x57 {
                        stack.pop();
                    }
                    match target {
                        W::K(t) => {
                            trace.known.entry(pc).or_default().insert(t);
                            if let Ok(t) = usize::try_from(t) {
                                if jumpdests.contains(&t) {
                                    work.push((t, stack.clone()));
                                }
                            }
                        }
                        W::U => {
                            trace.opaque.insert(pc);
                        }
                    }
                    if op == 0x56 {
                        break;
                    }
                    pc += 1;
                    continue;
                }
                0x58 => stack.push(W::K(U256::from(pc))),
                _ => {
                    let args: Vec<W> = stack.drain(top - pops..).rev().collect();
                    if pushes == 1 {
                        stack.push(fold(op, &args));
                    }
                }
            }
            if stack.len() > 1024 {
                break;
            }
            pc += 1;
        }
    }
    trace
}

#[derive(Debug, Default)]
pub struct JumpCheck {
    pub compared: usize,
    pub skipped: usize,
}

/// Compares every resolved jump of `code` against the emulator.
pub fn check_jumps(code: &[u8]) -> Result<JumpCheck, String> {
    let cfg = Cfg::from_bytecode(code).map_err(|e| format!("{e:?}"))?;
    for targets in cfg.jump_targets.values() {
        for t in targets {
            if code.get(*t) != Some(&0x5b) {
                return Err(format!("resolved edge to non-JUMPDEST {t}"));
            }
        }
    }
    let trace = emulate(code);
    let mut out = JumpCheck::default();
    for (jump, seen) in &trace.known {
        if trace.opaque.contains(jump) {
            out.skipped += 1;
            continue;
        }
        out.compared += 1;
        let expected: BTreeSet<usize> = seen
            .iter()
            .filter_map(|t| usize::try_from(*t).ok())
            .filter(|t| trace.jumpdests.contains(t))
            .collect();
        let got = cfg.jump_targets.get(jump).cloned().unwrap_or_default();
        if got != expected {
            return Err(format!("jump at {jump}: cfg {got:?}, emulator {expected:?}"));
        }
    }
    Ok(out)
}
