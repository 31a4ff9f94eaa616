use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha3::{Digest, Keccak256};

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

pub fn selector(signature: &str) -> [u8; 4] {
    let h = keccak256(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbiFunction {
    pub name: String,
    pub signature: String,
    pub selector: [u8; 4],
    pub state_mutability: String,
}

impl AbiFunction {
    pub fn selector_u32(&self) -> u32 {
        u32::from_be_bytes(self.selector)
    }

    pub fn selector_hex(&self) -> String {
        hex::encode(self.selector)
    }
}

/// Canonical type of one ABI parameter; tuples expand their components.
fn canonical_type(param: &Value) -> Option<String> {
    let ty = param.get("type")?.as_str()?;
    if let Some(rest) = ty.strip_prefix("tuple") {
        let comps = param.get("components")?.as_array()?;
        let inner: Option<Vec<String>> = comps.iter().map(canonical_type).collect();
        return Some(format!("({}){rest}", inner?.join(",")));
    }
    Some(ty.to_string())
}

/// Functions from a compiler-emitted ABI, with selectors computed locally.
pub fn parse_abi(abi: &Value) -> Vec<AbiFunction> {
    let mut out = Vec::new();
    for item in abi.as_array().into_iter().flatten() {
        if item.get("type").and_then(Value::as_str) != Some("function") {
            continue;
        }
        let Some(name) = item.get("name").and_then(Value::as_str) else {
            continue;
        };
        let inputs = item
            .get("inputs")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let Some(types) = inputs.iter().map(canonical_type).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let signature = format!("{name}({})", types.join(","));
        out.push(AbiFunction {
            name: name.to_string(),
            selector: selector(&signature),
            signature,
            state_mutability: item
                .get("stateMutability")
                .and_then(Value::as_str)
                .unwrap_or("nonpayable")
                .to_string(),
        });
    }
    out.sort_by(|a, b| a.signature.cmp(&b.signature));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn transfer_selector() {
        assert_eq!(hex::encode(selector("transfer(address,uint256)")), "a9059cbb");
        assert_eq!(hex::encode(keccak256(b"")), "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470");
    }

    #[test]
    fn tuple_params() {
        let abi = json!([{"type": "function", "name": "f", "stateMutability": "view",
            "inputs": [{"type": "tuple[]", "components": [{"type": "uint256"}, {"type": "address"}]},
                       {"type": "bytes32"}]},
            {"type": "event", "name": "E", "inputs": []}]);
        let f = parse_abi(&abi);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].signature, "f((uint256,address)[],bytes32)");
    }
}
