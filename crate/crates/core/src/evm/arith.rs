//! 256-bit word semantics shared by constant folding, the symbolic evaluator
//! and model replay.

use super::opcode::Opcode;
use ruint::aliases::U256;

fn is_neg(x: U256) -> bool {
    x.bit(255)
}

fn abs(x: U256) -> U256 {
    if is_neg(x) {
        x.wrapping_neg()
    } else {
        x
    }
}

pub fn bool_word(b: bool) -> U256 {
    if b {
        U256::from(1)
    } else {
        U256::ZERO
    }
}

pub fn sdiv(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let q = abs(a) / abs(b);
    if is_neg(a) != is_neg(b) {
        q.wrapping_neg()
    } else {
        q
    }
}

pub fn smod(a: U256, b: U256) -> U256 {
    if b.is_zero() {
        return U256::ZERO;
    }
    let r = abs(a) % abs(b);
    if is_neg(a) {
        r.wrapping_neg()
    } else {
        r
    }
}

pub fn slt(a: U256, b: U256) -> bool {
    match (is_neg(a), is_neg(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

pub fn signextend(b: U256, x: U256) -> U256 {
    if b >= U256::from(31) {
        return x;
    }
    let bit = 8 * b.as_limbs()[0] as usize + 7;
    let mask = (U256::from(1) << (bit + 1)) - U256::from(1);
    if x.bit(bit) {
        x | !mask
    } else {
        x & mask
    }
}

pub fn shl(shift: U256, x: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::ZERO
    } else {
        x << shift.as_limbs()[0] as usize
    }
}

pub fn shr(shift: U256, x: U256) -> U256 {
    if shift >= U256::from(256) {
        U256::ZERO
    } else {
        x >> shift.as_limbs()[0] as usize
    }
}

pub fn sar(shift: U256, x: U256) -> U256 {
    if !is_neg(x) {
        return shr(shift, x);
    }
    if shift >= U256::from(256) {
        return U256::MAX;
    }
    !((!x) >> shift.as_limbs()[0] as usize)
}

pub fn byte(i: U256, x: U256) -> U256 {
    if i >= U256::from(32) {
        return U256::ZERO;
    }
    U256::from(x.byte(31 - i.as_limbs()[0] as usize))
}

/// Evaluates a pure arithmetic/logic opcode. Operands are top-of-stack first.
/// Returns `None` for opcodes that are not pure word functions.
pub fn eval_pure(op: Opcode, a: &[U256]) -> Option<U256> {
    use Opcode::*;
    let r = match op {
        Add => a[0].wrapping_add(a[1]),
        Mul => a[0].wrapping_mul(a[1]),
        Sub => a[0].wrapping_sub(a[1]),
        Div => {
            if a[1].is_zero() {
                U256::ZERO
            } else {
                a[0] / a[1]
            }
        }
        Sdiv => sdiv(a[0], a[1]),
        Mod => {
            if a[1].is_zero() {
                U256::ZERO
            } else {
                a[0] % a[1]
            }
        }
        Smod => smod(a[0], a[1]),
        Addmod => a[0].add_mod(a[1], a[2]),
        Mulmod => a[0].mul_mod(a[1], a[2]),
        Exp => a[0].wrapping_pow(a[1]),
        Signextend => signextend(a[0], a[1]),
        Lt => bool_word(a[0] < a[1]),
        Gt => bool_word(a[0] > a[1]),
        Slt => bool_word(slt(a[0], a[1])),
        Sgt => bool_word(slt(a[1], a[0])),
        Eq => bool_word(a[0] == a[1]),
        Iszero => bool_word(a[0].is_zero()),
        And => a[0] & a[1],
        Or => a[0] | a[1],
        Xor => a[0] ^ a[1],
        Not => !a[0],
        Byte => byte(a[0], a[1]),
        Shl => shl(a[0], a[1]),
        Shr => shr(a[0], a[1]),
        Sar => sar(a[0], a[1]),
        _ => return None,
    };
    Some(r)
}

pub fn is_pure(op: Opcode) -> bool {
    use Opcode::*;
    matches!(
        op,
        Add | Mul
            | Sub
            | Div
            | Sdiv
            | Mod
            | Smod
            | Addmod
            | Mulmod
            | Exp
            | Signextend
            | Lt
            | Gt
            | Slt
            | Sgt
            | Eq
            | Iszero
            | And
            | Or
            | Xor
            | Not
            | Byte
            | Shl
            | Shr
            | Sar
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(x: u64) -> U256 {
        U256::from(x)
    }

    fn neg(x: u64) -> U256 {
        U256::from(x).wrapping_neg()
    }

    #[test]
    fn signed_ops() {
        assert_eq!(sdiv(neg(7), u(2)), neg(3));
        assert_eq!(smod(neg(7), u(2)), neg(1));
        assert_eq!(smod(u(7), neg(2)), u(1));
        assert!(slt(neg(1), u(0)));
        assert_eq!(sar(u(1), neg(4)), neg(2));
        assert_eq!(sar(u(300), neg(4)), U256::MAX);
        assert_eq!(signextend(u(0), u(0xff)), U256::MAX);
        assert_eq!(signextend(u(0), u(0x7f)), u(0x7f));
    }

    #[test]
    fn shifts_and_bytes() {
        assert_eq!(shr(u(224), U256::from(0xa9059cbbu64) << 224), u(0xa9059cbb));
        assert_eq!(shl(u(256), u(1)), U256::ZERO);
        assert_eq!(byte(u(31), u(0xab)), u(0xab));
        assert_eq!(byte(u(0), U256::MAX), u(0xff));
    }

    #[test]
    fn division_by_zero_is_zero() {
        assert_eq!(eval_pure(Opcode::Div, &[u(5), u(0)]), Some(U256::ZERO));
        assert_eq!(eval_pure(Opcode::Addmod, &[u(5), u(6), u(0)]), Some(U256::ZERO));
        assert_eq!(eval_pure(Opcode::Sload, &[u(0)]), None);
    }
}
