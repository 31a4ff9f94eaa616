use super::abi::AbiFunction;
use super::ast::{AstKind, AstNode, SrcRange};
use regex::Regex;
use semver::{Version, VersionReq};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("no installed or cached compiler for version {0}")]
    CompilerNotFound(String),
    #[error("compilation failed:\n{}", .0.join("\n"))]
    CompileError(Vec<String>),
    #[error("unresolved import: {0}")]
    ImportUnresolved(String),
    #[error("contract {0} has no verified source")]
    NotVerified(String),
    #[error("explorer rate limit hit (retry after {0:?} s)")]
    RateLimited(Option<u64>),
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("manifest: {0}")]
    ManifestParseError(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed compiler output: {0}")]
    BadOutput(String),
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ArtifactError {
    let path = path.into();
    move |source| ArtifactError::Io { path, source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub id: String,
    pub path: String,
    pub content: String,
    pub declared_pragma: Option<String>,
}

fn pragma_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"pragma\s+solidity\s+([^;]+);").unwrap())
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, content: impl Into<String>) -> Result<SourceUnit, ArtifactError> {
        let path = path.into();
        let content = content.into();
        if content.trim().is_empty() {
            return Err(ArtifactError::InvalidSource(format!("{path}: empty source")));
        }
        let declared_pragma = pragma_re()
            .captures(&content)
            .map(|c| c[1].trim().to_string());
        if let Some(p) = &declared_pragma {
            if parse_pragma(p).is_none() {
                return Err(ArtifactError::InvalidSource(format!(
                    "{path}: unparseable pragma `{p}`"
                )));
            }
        }
        let digest = Sha256::digest(content.as_bytes());
        Ok(SourceUnit {
            id: hex::encode(&digest[..8]),
            path,
            content,
            declared_pragma,
        })
    }

    /// 1-based line and column of a byte offset.
    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let offset = offset.min(self.content.len());
        let before = &self.content.as_bytes()[..offset];
        let line = before.iter().filter(|b| **b == b'\n').count() + 1;
        let line_start = before.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
        let col = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
        (line, col)
    }
}

/// Converts a Solidity version pragma into alternative semver requirements.
pub fn parse_pragma(pragma: &str) -> Option<Vec<VersionReq>> {
    static OP_SPACE: OnceLock<Regex> = OnceLock::new();
    let op_space = OP_SPACE.get_or_init(|| Regex::new(r"(>=|<=|>|<|=|\^|~)\s+").unwrap());
    let mut out = Vec::new();
    for alt in pragma.split("||") {
        let alt = op_space.replace_all(alt.trim(), "$1");
        let terms: Vec<String> = alt
            .split_whitespace()
            .map(|t| {
                if t.starts_with(|c: char| c.is_ascii_digit()) {
                    format!("={t}")
                } else {
                    t.to_string()
                }
            })
            .collect();
        if terms.is_empty() {
            return None;
        }
        out.push(VersionReq::parse(&terms.join(", ")).ok()?);
    }
    Some(out)
}

pub fn pragma_allows(pragma: &str, v: &Version) -> bool {
    parse_pragma(pragma).is_some_and(|alts| alts.iter().any(|r| r.matches(v)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpKind {
    In,
    Out,
    Regular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMapEntry {
    /// `None` marks compiler-generated code with no source counterpart.
    pub range: Option<SrcRange>,
    pub jump: JumpKind,
}

/// Expands the compressed `s:l:f:j;...` form into one entry per instruction.
pub fn decompress_source_map(map: &str, instr_count: usize) -> Vec<SourceMapEntry> {
    let mut out = Vec::with_capacity(instr_count);
    let (mut s, mut l, mut f) = (-1i64, -1i64, -1i64);
    let mut j = 'j';
    for item in map.split(';') {
        if out.len() == instr_count {
            break;
        }
        let fields: Vec<&str> = item.split(':').collect();
        let pick = |i: usize| fields.get(i).filter(|x| !x.is_empty()).copied();
        if let Some(x) = pick(0).and_then(|x| x.parse().ok()) {
            s = x;
        }
        if let Some(x) = pick(1).and_then(|x| x.parse().ok()) {
            l = x;
        }
        if let Some(x) = pick(2).and_then(|x| x.parse().ok()) {
            f = x;
        }
        if let Some(x) = pick(3).and_then(|x| x.chars().next()) {
            j = x;
        }
        let range = (s >= 0 && l >= 0 && f >= 0).then(|| SrcRange {
            start: s as usize,
            length: l as usize,
            file: Some(f as usize),
        });
        let jump = match j {
            'i' => JumpKind::In,
            'o' => JumpKind::Out,
            _ => JumpKind::Regular,
        };
        out.push(SourceMapEntry { range, jump });
    }
    while out.len() < instr_count {
        out.push(SourceMapEntry {
            range: None,
            jump: JumpKind::Regular,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompilerSettings {
    pub optimizer: bool,
    pub runs: u32,
    pub evm_version: Option<String>,
}

impl Default for CompilerSettings {
    fn default() -> Self {
        CompilerSettings {
            optimizer: false,
            runs: 200,
            evm_version: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompilationArtifact {
    pub contract_name: String,
    /// Path of the source unit declaring the contract.
    pub source_path: String,
    /// AST id of the ContractDefinition.
    pub contract_id: i64,
    /// Synthetic `Root` node whose children are the compiled SourceUnits.
    pub ast_root: Arc<AstNode>,
    /// Indexed by compiler source id.
    pub sources: Arc<Vec<SourceUnit>>,
    pub deployed_bytecode: Vec<u8>,
    /// One entry per instruction of the deployed code.
    pub source_map: Vec<SourceMapEntry>,
    pub abi: Vec<AbiFunction>,
    pub compiler_version: Version,
    pub settings: CompilerSettings,
    /// Immutable variable AST id -> (byte offset, length) placeholders in the deployed code.
    pub immutable_references: BTreeMap<i64, Vec<(usize, usize)>>,
    pub contract_kind: String,
}

impl CompilationArtifact {
    pub fn contract_node(&self) -> Option<&AstNode> {
        self.ast_root.find(self.contract_id)
    }

    pub fn source(&self, file: usize) -> Option<&SourceUnit> {
        self.sources.get(file)
    }

    /// `path:line` for a source range.
    pub fn location(&self, r: &SrcRange) -> Option<(String, usize, usize)> {
        let su = self.sources.get(r.file?)?;
        let (line, col) = su.line_col(r.start);
        Some((su.path.clone(), line, col))
    }

    pub fn text(&self, r: &SrcRange) -> Option<&str> {
        let su = self.sources.get(r.file?)?;
        su.content.get(r.start..r.end())
    }

    pub fn source_units(&self) -> impl Iterator<Item = &AstNode> {
        self.ast_root
            .children
            .iter()
            .filter(|c| c.kind == AstKind::SourceUnit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pragma_forms() {
        let v = |s: &str| Version::parse(s).unwrap();
        assert!(pragma_allows("^0.8.0", &v("0.8.26")));
        assert!(!pragma_allows("^0.8.0", &v("0.9.0")));
        assert!(pragma_allows(">=0.7.0 <0.9.0", &v("0.8.26")));
        assert!(pragma_allows(">= 0.7.0 < 0.9.0", &v("0.8.1")));
        assert!(pragma_allows("0.8.26", &v("0.8.26")));
        assert!(!pragma_allows("0.8.25", &v("0.8.26")));
        assert!(pragma_allows("^0.7.6 || ^0.8.0", &v("0.8.3")));
        assert!(parse_pragma("banana").is_none());
    }

    #[test]
    fn source_map_inherits_fields() {
        let m = decompress_source_map("0:10:0:-;;5:2;:::i;-1:-1:-1:-", 6);
        assert_eq!(m.len(), 6);
        assert_eq!(m[1].range, m[0].range);
        assert_eq!(m[2].range.unwrap().start, 5);
        assert_eq!(m[2].range.unwrap().file, Some(0));
        assert_eq!(m[3].jump, JumpKind::In);
        assert_eq!(m[4].range, None);
        assert_eq!(m[5].range, None);
    }

    #[test]
    fn line_col() {
        let su = SourceUnit::new("a.sol", "ab\ncd\nef").unwrap();
        assert_eq!(su.line_col(0), (1, 1));
        assert_eq!(su.line_col(4), (2, 2));
        assert!(SourceUnit::new("e.sol", "  ").is_err());
    }
}
