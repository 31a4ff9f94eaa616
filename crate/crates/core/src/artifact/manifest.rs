//! Corpus manifests: local sources and explorer queries with optional labels.

use super::cache::Cache;
use super::explorer::{fetch_verified, Chain, ExplorerQuery};
use super::solc::{compile_auto, load_source_dir, load_source_file, CompileOptions};
use super::types::{io_err, ArtifactError, CompilationArtifact};
use crate::Smell;
use rayon::prelude::*;
use semver::Version;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Directory of sources, or a single `.sol` file; relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solc_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Smell>>,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub labels: Option<BTreeSet<Smell>>,
    pub result: Result<Vec<CompilationArtifact>, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, ArtifactError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Manifest::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Manifest, ArtifactError> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| ArtifactError::ManifestParseError(e.to_string()))?;
        for e in &m.entries {
            let local = e.source_dir.is_some();
            let remote = e.chain.is_some() || e.address.is_some();
            if local == remote {
                return Err(ArtifactError::ManifestParseError(format!(
                    "entry `{}` needs exactly one of source_dir or chain+address",
                    e.name
                )));
            }
            if remote && (e.chain.is_none() || e.address.is_none()) {
                return Err(ArtifactError::ManifestParseError(format!(
                    "entry `{}` needs both chain and address",
                    e.name
                )));
            }
            if let Some(v) = &e.solc_version {
                Version::parse(v).map_err(|err| {
                    ArtifactError::ManifestParseError(format!("entry `{}`: solc_version: {err}", e.name))
                })?;
            }
        }
        Ok(m)
    }
}

pub fn load_entry(
    e: &ManifestEntry,
    base: &Path,
    opts: &CompileOptions,
    cache: &Cache,
) -> Result<Vec<CompilationArtifact>, ArtifactError> {
    let pin = e.solc_version.as_deref().map(Version::parse).transpose().ok().flatten();
    if let Some(dir) = &e.source_dir {
        let p: PathBuf = base.join(dir);
        let sources = if p.is_file() { load_source_file(&p)? } else { load_source_dir(&p)? };
        return compile_auto(&sources, pin.as_ref(), opts);
    }
    let chain: Chain = e
        .chain
        .as_deref()
        .unwrap_or_default()
        .parse()
        .map_err(ArtifactError::ManifestParseError)?;
    load_remote(&ExplorerQuery::new(chain, e.address.as_deref().unwrap_or_default(), None)?, pin.as_ref(), opts, cache)
}

/// Fetches verified source for `q` and compiles it with the recorded settings.
pub fn load_remote(
    q: &ExplorerQuery,
    pin: Option<&Version>,
    opts: &CompileOptions,
    cache: &Cache,
) -> Result<Vec<CompilationArtifact>, ArtifactError> {
    let fetched = fetch_verified(q, cache)?;
    let mut o = opts.clone();
    o.settings = fetched.settings.clone();
    let v = pin.cloned().unwrap_or(fetched.compiler_version);
    let arts = super::solc::compile(&fetched.sources, &v, &o)?;
    Ok(arts
        .into_iter()
        .filter(|a| a.contract_name == fetched.contract_name)
        .collect())
}

/// Compiles every manifest entry; per-entry failures are recorded, not fatal.
pub fn normalize_corpus(manifest: &Path, opts: &CompileOptions, cache: &Cache) -> Result<Vec<CorpusEntry>, ArtifactError> {
    let m = Manifest::load(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(normalize_entries(&m, base, opts, cache))
}

pub fn normalize_entries(m: &Manifest, base: &Path, opts: &CompileOptions, cache: &Cache) -> Vec<CorpusEntry> {
    m.entries
        .par_iter()
        .map(|e| CorpusEntry {
            name: e.name.clone(),
            labels: e.labels.as_ref().map(|l| l.iter().copied().collect()),
            result: load_entry(e, base, opts, cache).map_err(|err| err.to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let m = Manifest::parse(
            r#"{"entries": [{"name": "a", "source_dir": "x.sol", "labels": ["CCRA"]},
                            {"name": "b", "chain": "ethereum", "address": "0x00", "solc_version": "0.8.26"}]}"#,
        )
        .unwrap();
        assert_eq!(m.entries[0].labels.as_deref(), Some(&[Smell::Ccra][..]));
        assert!(Manifest::parse(r#"{"entries": [{"name": "c"}]}"#).is_err());
        assert!(Manifest::parse(r#"{"entries": [{"name": "c", "chain": "bsc"}]}"#).is_err());
        assert!(Manifest::parse(r#"{"entries": [{"name": "c", "source_dir": "d", "labels": ["XYZ"]}]}"#).is_err());
        assert!(Manifest::parse("not json").is_err());
    }
}
