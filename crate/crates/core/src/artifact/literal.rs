use super::abi::keccak256;
use ruint::aliases::U256;

fn subdenomination_factor(unit: &str) -> Option<U256> {
    let f: u64 = match unit {
        "wei" | "seconds" => 1,
        "gwei" => 1_000_000_000,
        "szabo" => 1_000_000_000_000,
        "finney" => 1_000_000_000_000_000,
        "ether" => 1_000_000_000_000_000_000,
        "minutes" => 60,
        "hours" => 3_600,
        "days" => 86_400,
        "weeks" => 604_800,
        "years" => 31_536_000,
        _ => return None,
    };
    Some(U256::from(f))
}

/// Parses a Solidity number literal: hex, decimal with `_` separators,
/// and decimal/scientific forms that denote an integer (`1.5e3`).
pub fn parse_number(text: &str) -> Option<U256> {
    let t: String = text.chars().filter(|c| *c != '_').collect();
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        if h.is_empty() {
            return None;
        }
        return U256::from_str_radix(h, 16).ok();
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().ok()?),
        None => (&t[..], 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let shift = exp - frac_part.len() as i64;
    let mut digits = digits.trim_start_matches('0').to_string();
    if digits.is_empty() {
        return Some(U256::ZERO);
    }
    if shift >= 0 {
        digits.push_str(&"0".repeat(shift as usize));
    } else {
        let cut = (-shift) as usize;
        if cut > digits.len() {
            return None;
        }
        let (keep, dropped) = digits.split_at(digits.len() - cut);
        if dropped.bytes().any(|b| b != b'0') {
            return None;
        }
        digits = if keep.is_empty() { "0".into() } else { keep.to_string() };
    }
    U256::from_str_radix(&digits, 10).ok()
}

pub fn parse_address(text: &str) -> Option<[u8; 20]> {
    let h = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X"))?;
    if h.len() != 40 {
        return None;
    }
    let bytes = hex::decode(h).ok()?;
    bytes.try_into().ok()
}

/// EIP-55 mixed-case checksum encoding.
pub fn to_checksum(addr: &[u8; 20]) -> String {
    let lower = hex::encode(addr);
    let hash = keccak256(lower.as_bytes());
    let mut out = String::from("0x");
    for (i, ch) in lower.chars().enumerate() {
        let nibble = (hash[i / 2] >> (if i % 2 == 0 { 4 } else { 0 })) & 0xf;
        if ch.is_ascii_alphabetic() && nibble >= 8 {
            out.push(ch.to_ascii_uppercase());
        } else {
            out.push(ch);
        }
    }
    out
}

pub fn address_from_word(w: U256) -> Option<[u8; 20]> {
    if w >> 160 != U256::ZERO {
        return None;
    }
    let b: [u8; 32] = w.to_be_bytes();
    b[12..].try_into().ok()
}

/// Normalized literal text: decimal for integers, checksummed hex for addresses.
pub fn normalize_literal(
    kind: &str,
    value: Option<&str>,
    subdenomination: Option<&str>,
    type_string: &str,
) -> Option<String> {
    match kind {
        "number" => {
            let mut n = parse_number(value?)?;
            if let Some(unit) = subdenomination {
                n = n.checked_mul(subdenomination_factor(unit)?)?;
            }
            if type_string.starts_with("address") {
                return address_from_word(n).map(|a| to_checksum(&a));
            }
            Some(n.to_string())
        }
        "bool" => value.map(str::to_string),
        _ => value.map(str::to_string),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("43200"), Some(U256::from(43200)));
        assert_eq!(parse_number("1_000_000"), Some(U256::from(1_000_000)));
        assert_eq!(parse_number("0x1b6"), Some(U256::from(438)));
        assert_eq!(parse_number("2e3"), Some(U256::from(2000)));
        assert_eq!(parse_number("1.5e3"), Some(U256::from(1500)));
        assert_eq!(parse_number("1.5"), None);
        assert_eq!(parse_number("0"), Some(U256::ZERO));
    }

    #[test]
    fn subdenominations() {
        assert_eq!(
            normalize_literal("number", Some("1"), Some("ether"), "int_const 1000000000000000000")
                .as_deref(),
            Some("1000000000000000000")
        );
        assert_eq!(
            normalize_literal("number", Some("2"), Some("days"), "").as_deref(),
            Some("172800")
        );
    }

    #[test]
    fn eip55_vectors() {
        for s in [
            "0x5aAeb6053F3E94C9b9A09f33669435E7Ef1BeAed",
            "0xfB6916095ca1df60bB79Ce92cE3Ea74c37c5d359",
            "0xdbF03B407c01E7cD3CBea99509d93f8DDDC8C6FB",
            "0x7a250d5630B4cF539739dF2C5dAcb4c659F2488D",
        ] {
            let a = parse_address(&s.to_lowercase()).unwrap();
            assert_eq!(to_checksum(&a), s);
        }
    }

    #[test]
    fn address_literal_normalized() {
        let n = normalize_literal(
            "number",
            Some("0x7a250d5630b4cf539739df2c5dacb4c659f2488d"),
            None,
            "address",
        );
        assert_eq!(n.as_deref(), Some("0x7a250d5630B4cF539739dF2C5dAcb4c659F2488D"));
    }
}
