pub mod arith;
pub mod cfg;
pub mod disasm;
pub mod opcode;
pub mod ssa;

pub use cfg::{BasicBlock, Cfg, CfgDiagnostic, Resolution};
pub use disasm::{disassemble, disassemble_runtime, strip_metadata, DisasmError, Instruction};
pub use opcode::Opcode;
pub use ssa::{to_ssa, BlockId, SsaProgram, SsaValue, Terminator, ValueDef, ValueId};
pub use cfg::resolve_jumps;
