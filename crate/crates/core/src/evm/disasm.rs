use super::opcode::Opcode;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisasmError {
    #[error("PUSH immediate at offset {0} overruns the end of code")]
    TruncatedPush(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: Opcode,
    /// Raw byte; differs from `opcode.byte()` only for undefined opcodes.
    pub byte: u8,
    pub immediate: Option<Vec<u8>>,
    pub stack_in: u8,
    pub stack_out: u8,
}

impl Instruction {
    pub fn width(&self) -> usize {
        1 + self.immediate.as_ref().map_or(0, Vec::len)
    }

    pub fn next_offset(&self) -> usize {
        self.offset + self.width()
    }

    /// The pushed constant for PUSH0..PUSH32.
    pub fn push_value(&self) -> Option<U256> {
        if !self.opcode.is_push() {
            return None;
        }
        Some(match &self.immediate {
            Some(bytes) => U256::from_be_slice(bytes),
            None => U256::ZERO,
        })
    }
}

/// Splits off the CBOR metadata trailer solc appends to runtime code.
///
/// The trailer is a CBOR map followed by its own big-endian u16 length. When the
/// suffix does not look like one, the code is returned unchanged.
pub fn strip_metadata(code: &[u8]) -> (&[u8], Option<&[u8]>) {
    if code.len() < 2 {
        return (code, None);
    }
    let n = code.len();
    let len = u16::from_be_bytes([code[n - 2], code[n - 1]]) as usize;
    if len == 0 || len + 2 > n {
        return (code, None);
    }
    let start = n - 2 - len;
    let head = code[start];
    // map with 1..=23 entries, or an indefinite-length map
    let is_map = (0xa1..=0xb7).contains(&head) || head == 0xbf;
    if !is_map {
        return (code, None);
    }
    (&code[..start], Some(&code[start..n - 2]))
}

/// Linear-sweep decode of `code`. The caller strips the metadata trailer first.
pub fn disassemble(code: &[u8]) -> Result<Vec<Instruction>, DisasmError> {
    let mut out = Vec::with_capacity(code.len());
    let mut pc = 0;
    while pc < code.len() {
        let byte = code[pc];
        let opcode = Opcode::from_byte(byte);
        let width = opcode.push_width();
        let immediate = if width > 0 {
            if pc + 1 + width > code.len() {
                return Err(DisasmError::TruncatedPush(pc));
            }
            Some(code[pc + 1..pc + 1 + width].to_vec())
        } else {
            None
        };
        let (stack_in, stack_out) = opcode.arity();
        out.push(Instruction {
            offset: pc,
            opcode,
            byte,
            immediate,
            stack_in,
            stack_out,
        });
        pc += 1 + width;
    }
    Ok(out)
}

/// Strips the trailer, then disassembles.
pub fn disassemble_runtime(code: &[u8]) -> Result<Vec<Instruction>, DisasmError> {
    disassemble(strip_metadata(code).0)
}

pub fn render(instrs: &[Instruction]) -> String {
    let mut s = String::new();
    for i in instrs {
        s.push_str(&format!("{:05x} {}", i.offset, i.opcode));
        if let Some(imm) = &i.immediate {
            s.push_str(" 0x");
            s.push_str(&hex::encode(imm));
        }
        if i.opcode == Opcode::Invalid && i.byte != 0xfe {
            s.push_str(&format!(" (0x{:02x})", i.byte));
        }
        s.push('\n');
    }
    s
}
