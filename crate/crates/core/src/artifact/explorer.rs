//! Verified-source retrieval from Etherscan-compatible explorer APIs.

use super::cache::{sha256_hex, Cache};
use super::literal::{parse_address, to_checksum};
use super::types::{ArtifactError, CompilerSettings, SourceUnit};
use semver::Version;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

pub const API_KEY_ENV: &str = "EQUIVGUARD_EXPLORER_KEY";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    Ethereum,
    Bsc,
    Polygon,
    Arbitrum,
    Optimism,
    Avalanche,
    Custom(String),
}

impl Chain {
    pub fn base_url(&self) -> &str {
        match self {
            Chain::Ethereum => "https://api.etherscan.io/api",
            Chain::Bsc => "https://api.bscscan.com/api",
            Chain::Polygon => "https://api.polygonscan.com/api",
            Chain::Arbitrum => "https://api.arbiscan.io/api",
            Chain::Optimism => "https://api-optimistic.etherscan.io/api",
            Chain::Avalanche => "https://api.snowtrace.io/api",
            Chain::Custom(url) => url,
        }
    }

    /// Directory name under the cache.
    pub fn cache_key(&self) -> String {
        match self {
            Chain::Custom(url) => format!("custom-{}", &sha256_hex(url.as_bytes())[..12]),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Chain::Ethereum => "ethereum",
            Chain::Bsc => "bsc",
            Chain::Polygon => "polygon",
            Chain::Arbitrum => "arbitrum",
            Chain::Optimism => "optimism",
            Chain::Avalanche => "avalanche",
            Chain::Custom(u) => return write!(f, "custom:{u}"),
        };
        f.write_str(s)
    }
}

impl FromStr for Chain {
    type Err = String;
    fn from_str(s: &str) -> Result<Chain, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ethereum" | "mainnet" => Chain::Ethereum,
            "bsc" => Chain::Bsc,
            "polygon" => Chain::Polygon,
            "arbitrum" => Chain::Arbitrum,
            "optimism" => Chain::Optimism,
            "avalanche" => Chain::Avalanche,
            _ => match s.strip_prefix("custom:") {
                Some(url) if !url.is_empty() => Chain::Custom(url.to_string()),
                _ => return Err(format!("unknown chain `{s}`")),
            },
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct ExplorerQuery {
    pub chain: Chain,
    /// EIP-55 checksummed.
    pub address: String,
    pub api_key: Option<String>,
}

impl fmt::Debug for ExplorerQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExplorerQuery")
            .field("chain", &self.chain)
            .field("address", &self.address)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl ExplorerQuery {
    pub fn new(chain: Chain, address: &str, api_key: Option<String>) -> Result<ExplorerQuery, ArtifactError> {
        let raw = parse_address(address).ok_or_else(|| ArtifactError::InvalidAddress(address.to_string()))?;
        Ok(ExplorerQuery {
            chain,
            address: to_checksum(&raw),
            api_key: api_key.or_else(|| std::env::var(API_KEY_ENV).ok()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchedSource {
    pub contract_name: String,
    pub sources: Vec<SourceUnit>,
    pub compiler_version: Version,
    pub settings: CompilerSettings,
    pub from_cache: bool,
    /// Digest of the raw explorer payload in the object store.
    pub payload_digest: String,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    chain: String,
    address: String,
    payload: String,
}

fn index_rel(q: &ExplorerQuery) -> String {
    format!("explorer/{}/{}.json", q.chain.cache_key(), q.address)
}

/// Returns the verified source set for `query`, consulting the cache first.
pub fn fetch_verified(query: &ExplorerQuery, cache: &Cache) -> Result<FetchedSource, ArtifactError> {
    let rel = index_rel(query);
    if let Some(hit) = from_cache(query, cache, &rel) {
        return hit;
    }
    let _g = cache.lock(&rel)?;
    // another writer may have filled the entry while we waited
    if let Some(hit) = from_cache(query, cache, &rel) {
        return hit;
    }
    let body = http_get(query)?;
    let fetched = parse_payload(&query.address, &body)?;
    let digest = cache.put_object(body.as_bytes())?;
    let idx = IndexEntry {
        chain: query.chain.to_string(),
        address: query.address.clone(),
        payload: digest.clone(),
    };
    cache.write_atomic(&rel, serde_json::to_string_pretty(&idx).expect("json").as_bytes())?;
    Ok(FetchedSource {
        payload_digest: digest,
        from_cache: false,
        ..fetched
    })
}

fn from_cache(query: &ExplorerQuery, cache: &Cache, rel: &str) -> Option<Result<FetchedSource, ArtifactError>> {
    let idx: IndexEntry = serde_json::from_slice(&cache.read(rel)?).ok()?;
    let payload = cache.get_object(&idx.payload)?;
    let body = String::from_utf8(payload).ok()?;
    Some(parse_payload(&query.address, &body).map(|f| FetchedSource {
        from_cache: true,
        payload_digest: idx.payload,
        ..f
    }))
}

fn http_get(query: &ExplorerQuery) -> Result<String, ArtifactError> {
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
    let mut req = agent
        .get(query.chain.base_url())
        .query("module", "contract")
        .query("action", "getsourcecode")
        .query("address", &query.address);
    if let Some(k) = &query.api_key {
        req = req.query("apikey", k);
    }
    match req.call() {
        Ok(resp) => resp
            .into_string()
            .map_err(|e| ArtifactError::NetworkError(e.to_string())),
        Err(ureq::Error::Status(429, resp)) => Err(ArtifactError::RateLimited(
            resp.header("Retry-After").and_then(|v| v.trim().parse().ok()),
        )),
        Err(ureq::Error::Status(code, _)) => Err(ArtifactError::NetworkError(format!("HTTP {code}"))),
        Err(ureq::Error::Transport(t)) => Err(ArtifactError::NetworkError(t.kind().to_string())),
    }
}

/// Parses an explorer `getsourcecode` response body.
pub fn parse_payload(address: &str, body: &str) -> Result<FetchedSource, ArtifactError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ArtifactError::NetworkError(format!("bad JSON: {e}")))?;
    let status = v.get("status").and_then(Value::as_str).unwrap_or("");
    let result = v.get("result");
    if status != "1" {
        let msg = result.and_then(Value::as_str).unwrap_or("").to_ascii_lowercase();
        if msg.contains("rate limit") {
            return Err(ArtifactError::RateLimited(None));
        }
        if msg.contains("not verified") || msg.contains("invalid address") {
            return Err(ArtifactError::NotVerified(address.to_string()));
        }
        return Err(ArtifactError::NetworkError(format!("explorer error: {msg}")));
    }
    let entry = result
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .ok_or_else(|| ArtifactError::NetworkError("empty result".into()))?;
    let code = entry.get("SourceCode").and_then(Value::as_str).unwrap_or("");
    if code.trim().is_empty() {
        return Err(ArtifactError::NotVerified(address.to_string()));
    }
    let name = entry
        .get("ContractName")
        .and_then(Value::as_str)
        .unwrap_or("Contract")
        .to_string();
    let version_text = entry.get("CompilerVersion").and_then(Value::as_str).unwrap_or("");
    let compiler_version = parse_compiler_version(version_text)
        .ok_or_else(|| ArtifactError::NetworkError(format!("unparseable compiler version `{version_text}`")))?;
    let mut settings = CompilerSettings {
        optimizer: entry.get("OptimizationUsed").and_then(Value::as_str) == Some("1"),
        runs: entry
            .get("Runs")
            .and_then(Value::as_str)
            .and_then(|r| r.parse().ok())
            .unwrap_or(200),
        evm_version: entry
            .get("EVMVersion")
            .and_then(Value::as_str)
            .filter(|e| !e.is_empty() && !e.eq_ignore_ascii_case("default"))
            .map(str::to_string),
    };
    let sources = split_sources(&name, code, &mut settings)?;
    Ok(FetchedSource {
        contract_name: name,
        sources,
        compiler_version,
        settings,
        from_cache: false,
        payload_digest: sha256_hex(body.as_bytes()),
    })
}

fn parse_compiler_version(s: &str) -> Option<Version> {
    let s = s.trim_start_matches('v');
    let core = s.split('+').next()?;
    Version::parse(core).ok()
}

fn split_sources(name: &str, code: &str, settings: &mut CompilerSettings) -> Result<Vec<SourceUnit>, ArtifactError> {
    let trimmed = code.trim();
    let json_text = if trimmed.starts_with("{{") && trimmed.ends_with("}}") {
        Some(&trimmed[1..trimmed.len() - 1])
    } else if trimmed.starts_with('{') {
        Some(trimmed)
    } else {
        None
    };
    let Some(text) = json_text else {
        return Ok(vec![SourceUnit::new(format!("{name}.sol"), code)?]);
    };
    let v: Value = serde_json::from_str(text)
        .map_err(|e| ArtifactError::InvalidSource(format!("multi-file source JSON: {e}")))?;
    let files = if let Some(s) = v.get("sources") {
        if let Some(opt) = v.pointer("/settings/optimizer/enabled").and_then(Value::as_bool) {
            settings.optimizer = opt;
        }
        if let Some(r) = v.pointer("/settings/optimizer/runs").and_then(Value::as_u64) {
            settings.runs = r as u32;
        }
        s
    } else {
        &v
    };
    let mut out = Vec::new();
    for (path, f) in files.as_object().into_iter().flatten() {
        let content = f
            .get("content")
            .and_then(Value::as_str)
            .ok_or_else(|| ArtifactError::InvalidSource(format!("{path}: missing content")))?;
        out.push(SourceUnit::new(path.clone(), content)?);
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
