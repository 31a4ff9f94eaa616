use serde::{Deserialize, Serialize};
use std::fmt;

macro_rules! opcodes {
    ($($byte:literal => $name:ident, $text:literal, $inp:literal, $out:literal;)*) => {
        /// EVM instruction set (Cancun). Undefined bytes decode to `Invalid`.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Opcode {
            $($name,)*
        }

        impl Opcode {
            pub fn from_byte(b: u8) -> Opcode {
                match b {
                    $($byte => Opcode::$name,)*
                    _ => Opcode::Invalid,
                }
            }

            pub fn byte(self) -> u8 {
                match self {
                    $(Opcode::$name => $byte,)*
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(Opcode::$name => $text,)*
                }
            }

            /// `(stack_in, stack_out)` per the EVM arity table.
            pub fn arity(self) -> (u8, u8) {
                match self {
                    $(Opcode::$name => ($inp, $out),)*
                }
            }
        }
    };
}

opcodes! {
    0x00 => Stop, "STOP", 0, 0;
    0x01 => Add, "ADD", 2, 1;
    0x02 => Mul, "MUL", 2, 1;
    0x03 => Sub, "SUB", 2, 1;
    0x04 => Div, "DIV", 2, 1;
    0x05 => Sdiv, "SDIV", 2, 1;
    0x06 => Mod, "MOD", 2, 1;
    0x07 => Smod, "SMOD", 2, 1;
    0x08 => Addmod, "ADDMOD", 3, 1;
    0x09 => Mulmod, "MULMOD", 3, 1;
    0x0a => Exp, "EXP", 2, 1;
    0x0b => Signextend, "SIGNEXTEND", 2, 1;
    0x10 => Lt, "LT", 2, 1;
    0x11 => Gt, "GT", 2, 1;
    0x12 => Slt, "SLT", 2, 1;
    0x13 => Sgt, "SGT", 2, 1;
    0x14 => Eq, "EQ", 2, 1;
    0x15 => Iszero, "ISZERO", 1, 1;
    0x16 => And, "AND", 2, 1;
    0x17 => Or, "OR", 2, 1;
    0x18 => Xor, "XOR", 2, 1;
    0x19 => Not, "NOT", 1, 1;
    0x1a => Byte, "BYTE", 2, 1;
    0x1b => Shl, "SHL", 2, 1;
    0x1c => Shr, "SHR", 2, 1;
    0x1d => Sar, "SAR", 2, 1;
    0x20 => Keccak256, "KECCAK256", 2, 1;
    0x30 => Address, "ADDRESS", 0, 1;
    0x31 => Balance, "BALANCE", 1, 1;
    0x32 => Origin, "ORIGIN", 0, 1;
    0x33 => Caller, "CALLER", 0, 1;
    0x34 => Callvalue, "CALLVALUE", 0, 1;
    0x35 => Calldataload, "CALLDATALOAD", 1, 1;
    0x36 => Calldatasize, "CALLDATASIZE", 0, 1;
    0x37 => Calldatacopy, "CALLDATACOPY", 3, 0;
    0x38 => Codesize, "CODESIZE", 0, 1;
    0x39 => Codecopy, "CODECOPY", 3, 0;
    0x3a => Gasprice, "GASPRICE", 0, 1;
    0x3b => Extcodesize, "EXTCODESIZE", 1, 1;
    0x3c => Extcodecopy, "EXTCODECOPY", 4, 0;
    0x3d => Returndatasize, "RETURNDATASIZE", 0, 1;
    0x3e => Returndatacopy, "RETURNDATACOPY", 3, 0;
    0x3f => Extcodehash, "EXTCODEHASH", 1, 1;
    0x40 => Blockhash, "BLOCKHASH", 1, 1;
    0x41 => Coinbase, "COINBASE", 0, 1;
    0x42 => Timestamp, "TIMESTAMP", 0, 1;
    0x43 => Number, "NUMBER", 0, 1;
    0x44 => Prevrandao, "PREVRANDAO", 0, 1;
    0x45 => Gaslimit, "GASLIMIT", 0, 1;
    0x46 => Chainid, "CHAINID", 0, 1;
    0x47 => Selfbalance, "SELFBALANCE", 0, 1;
    0x48 => Basefee, "BASEFEE", 0, 1;
    0x49 => Blobhash, "BLOBHASH", 1, 1;
    0x4a => Blobbasefee, "BLOBBASEFEE", 0, 1;
    0x50 => Pop, "POP", 1, 0;
    0x51 => Mload, "MLOAD", 1, 1;
    0x52 => Mstore, "MSTORE", 2, 0;
    0x53 => Mstore8, "MSTORE8", 2, 0;
    0x54 => Sload, "SLOAD", 1, 1;
    0x55 => Sstore, "SSTORE", 2, 0;
    0x56 => Jump, "JUMP", 1, 0;
    0x57 => Jumpi, "JUMPI", 2, 0;
    0x58 => Pc, "PC", 0, 1;
    0x59 => Msize, "MSIZE", 0, 1;
    0x5a => Gas, "GAS", 0, 1;
    0x5b => Jumpdest, "JUMPDEST", 0, 0;
    0x5c => Tload, "TLOAD", 1, 1;
    0x5d => Tstore, "TSTORE", 2, 0;
    0x5e => Mcopy, "MCOPY", 3, 0;
    0x5f => Push0, "PUSH0", 0, 1;
    0x60 => Push1, "PUSH1", 0, 1;
    0x61 => Push2, "PUSH2", 0, 1;
    0x62 => Push3, "PUSH3", 0, 1;
    0x63 => Push4, "PUSH4", 0, 1;
    0x64 => Push5, "PUSH5", 0, 1;
    0x65 => Push6, "PUSH6", 0, 1;
    0x66 => Push7, "PUSH7", 0, 1;
    0x67 => Push8, "PUSH8", 0, 1;
    0x68 => Push9, "PUSH9", 0, 1;
    0x69 => Push10, "PUSH10", 0, 1;
    0x6a => Push11, "PUSH11", 0, 1;
    0x6b => Push12, "PUSH12", 0, 1;
    0x6c => Push13, "PUSH13", 0, 1;
    0x6d => Push14, "PUSH14", 0, 1;
    0x6e => Push15, "PUSH15", 0, 1;
    0x6f => Push16, "PUSH16", 0, 1;
    0x70 => Push17, "PUSH17", 0, 1;
    0x71 => Push18, "PUSH18", 0, 1;
    0x72 => Push19, "PUSH19", 0, 1;
    0x73 => Push20, "PUSH20", 0, 1;
    0x74 => Push21, "PUSH21", 0, 1;
    0x75 => Push22, "PUSH22", 0, 1;
    0x76 => Push23, "PUSH23", 0, 1;
    0x77 => Push24, "PUSH24", 0, 1;
    0x78 => Push25, "PUSH25", 0, 1;
    0x79 => Push26, "PUSH26", 0, 1;
    0x7a => Push27, "PUSH27", 0, 1;
    0x7b => Push28, "PUSH28", 0, 1;
    0x7c => Push29, "PUSH29", 0, 1;
    0x7d => Push30, "PUSH30", 0, 1;
    0x7e => Push31, "PUSH31", 0, 1;
    0x7f => Push32, "PUSH32", 0, 1;
    0x80 => Dup1, "DUP1", 1, 2;
    0x81 => Dup2, "DUP2", 2, 3;
    0x82 => Dup3, "DUP3", 3, 4;
    0x83 => Dup4, "DUP4", 4, 5;
    0x84 => Dup5, "DUP5", 5, 6;
    0x85 => Dup6, "DUP6", 6, 7;
    0x86 => Dup7, "DUP7", 7, 8;
    0x87 => Dup8, "DUP8", 8, 9;
    0x88 => Dup9, "DUP9", 9, 10;
    0x89 => Dup10, "DUP10", 10, 11;
    0x8a => Dup11, "DUP11", 11, 12;
    0x8b => Dup12, "DUP12", 12, 13;
    0x8c => Dup13, "DUP13", 13, 14;
    0x8d => Dup14, "DUP14", 14, 15;
    0x8e => Dup15, "DUP15", 15, 16;
    0x8f => Dup16, "DUP16", 16, 17;
    0x90 => Swap1, "SWAP1", 2, 2;
    0x91 => Swap2, "SWAP2", 3, 3;
    0x92 => Swap3, "SWAP3", 4, 4;
    0x93 => Swap4, "SWAP4", 5, 5;
    0x94 => Swap5, "SWAP5", 6, 6;
    0x95 => Swap6, "SWAP6", 7, 7;
    0x96 => Swap7, "SWAP7", 8, 8;
    0x97 => Swap8, "SWAP8", 9, 9;
    0x98 => Swap9, "SWAP9", 10, 10;
    0x99 => Swap10, "SWAP10", 11, 11;
    0x9a => Swap11, "SWAP11", 12, 12;
    0x9b => Swap12, "SWAP12", 13, 13;
    0x9c => Swap13, "SWAP13", 14, 14;
    0x9d => Swap14, "SWAP14", 15, 15;
    0x9e => Swap15, "SWAP15", 16, 16;
    0x9f => Swap16, "SWAP16", 17, 17;
    0xa0 => Log0, "LOG0", 2, 0;
    0xa1 => Log1, "LOG1", 3, 0;
    0xa2 => Log2, "LOG2", 4, 0;
    0xa3 => Log3, "LOG3", 5, 0;
    0xa4 => Log4, "LOG4", 6, 0;
    0xf0 => Create, "CREATE", 3, 1;
    0xf1 => Call, "CALL", 7, 1;
    0xf2 => Callcode, "CALLCODE", 7, 1;
    0xf3 => Return, "RETURN", 2, 0;
    0xf4 => Delegatecall, "DELEGATECALL", 6, 1;
    0xf5 => Create2, "CREATE2", 4, 1;
    0xfa => Staticcall, "STATICCALL", 6, 1;
    0xfd => Revert, "REVERT", 2, 0;
    0xfe => Invalid, "INVALID", 0, 0;
    0xff => Selfdestruct, "SELFDESTRUCT", 1, 0;
}

impl Opcode {
    pub fn stack_in(self) -> u8 {
        self.arity().0
    }

    pub fn stack_out(self) -> u8 {
        self.arity().1
    }

    /// Immediate width for PUSH1..PUSH32, zero otherwise.
    pub fn push_width(self) -> usize {
        let b = self.byte();
        if (0x60..=0x7f).contains(&b) {
            (b - 0x5f) as usize
        } else {
            0
        }
    }

    pub fn is_push(self) -> bool {
        (0x5f..=0x7f).contains(&self.byte())
    }

    pub fn dup_depth(self) -> Option<usize> {
        let b = self.byte();
        (0x80..=0x8f).contains(&b).then(|| (b - 0x7f) as usize)
    }

    pub fn swap_depth(self) -> Option<usize> {
        let b = self.byte();
        (0x90..=0x9f).contains(&b).then(|| (b - 0x8f) as usize)
    }

    /// Ends a basic block.
    pub fn is_terminator(self) -> bool {
        matches!(
            self,
            Opcode::Stop
                | Opcode::Jump
                | Opcode::Jumpi
                | Opcode::Return
                | Opcode::Revert
                | Opcode::Invalid
                | Opcode::Selfdestruct
        )
    }

    /// Opcodes whose result is an environment input rather than a computation.
    pub fn is_env_input(self) -> bool {
        matches!(
            self,
            Opcode::Address
                | Opcode::Balance
                | Opcode::Origin
                | Opcode::Caller
                | Opcode::Callvalue
                | Opcode::Calldataload
                | Opcode::Calldatasize
                | Opcode::Codesize
                | Opcode::Gasprice
                | Opcode::Extcodesize
                | Opcode::Returndatasize
                | Opcode::Extcodehash
                | Opcode::Blockhash
                | Opcode::Coinbase
                | Opcode::Timestamp
                | Opcode::Number
                | Opcode::Prevrandao
                | Opcode::Gaslimit
                | Opcode::Chainid
                | Opcode::Selfbalance
                | Opcode::Basefee
                | Opcode::Blobhash
                | Opcode::Blobbasefee
                | Opcode::Pc
                | Opcode::Msize
                | Opcode::Gas
        )
    }

    pub fn is_call(self) -> bool {
        matches!(
            self,
            Opcode::Call | Opcode::Callcode | Opcode::Delegatecall | Opcode::Staticcall
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_roundtrip_for_defined_opcodes() {
        let mut defined = 0;
        for b in 0..=255u8 {
            let op = Opcode::from_byte(b);
            if op != Opcode::Invalid {
                assert_eq!(op.byte(), b);
                defined += 1;
            }
        }
        // 149 table entries minus the designated INVALID (0xfe)
        assert_eq!(defined, 148);
    }

    #[test]
    fn arities() {
        assert_eq!(Opcode::Call.arity(), (7, 1));
        assert_eq!(Opcode::Staticcall.arity(), (6, 1));
        assert_eq!(Opcode::Dup16.arity(), (16, 17));
        assert_eq!(Opcode::Swap1.arity(), (2, 2));
        assert_eq!(Opcode::Log4.arity(), (6, 0));
        assert_eq!(Opcode::Push32.push_width(), 32);
        assert_eq!(Opcode::Push0.push_width(), 0);
        assert_eq!(Opcode::from_byte(0x0c), Opcode::Invalid);
    }
}
