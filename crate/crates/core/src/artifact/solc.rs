//! Compiler discovery and the standard-JSON driver.

use super::abi::parse_abi;
use super::ast::{convert, AstKind, AstNode, SrcRange};
use super::cache::{sha256_hex, Cache};
use super::types::{
    decompress_source_map, io_err, pragma_allows, ArtifactError, CompilationArtifact,
    CompilerSettings, SourceUnit,
};
use crate::evm::disasm::disassemble_runtime;
use regex::Regex;
use semver::Version;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compiler {
    pub path: PathBuf,
    pub version: Version,
}

fn version_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d+)\.(\d+)\.(\d+)").unwrap())
}

impl Compiler {
    /// Queries `--version` on the binary.
    pub fn probe(path: &Path) -> Option<Compiler> {
        let out = Command::new(path).arg("--version").output().ok()?;
        let text = String::from_utf8_lossy(&out.stdout);
        let c = version_re().captures(&text)?;
        let version = Version::new(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?);
        Some(Compiler {
            path: path.to_path_buf(),
            version,
        })
    }

    pub fn run(&self, input: &str) -> Result<String, ArtifactError> {
        // Node-based compilers can exit before a piped stdout is drained, so
        // the document goes to a file instead.
        static SEQ: AtomicU64 = AtomicU64::new(0);
        let out_path = std::env::temp_dir().join(format!(
            "equivguard-solc-{}-{}.json",
            std::process::id(),
            SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let out_file = std::fs::File::create(&out_path).map_err(io_err(&out_path))?;
        let mut child = Command::new(&self.path)
            .arg("--standard-json")
            .stdin(Stdio::piped())
            .stdout(out_file)
            .stderr(Stdio::piped())
            .spawn()
            .map_err(io_err(&self.path))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(input.as_bytes())
            .map_err(io_err(&self.path))?;
        let out = child.wait_with_output().map_err(io_err(&self.path))?;
        let bytes = std::fs::read(&out_path).map_err(io_err(&out_path));
        let _ = std::fs::remove_file(&out_path);
        let text = String::from_utf8_lossy(&bytes?).into_owned();
        // some wrappers print banner lines before the document
        match text.find('{') {
            Some(i) => Ok(text[i..].to_string()),
            None => Err(ArtifactError::BadOutput(format!(
                "{} produced no JSON: {}",
                self.path.display(),
                String::from_utf8_lossy(&out.stderr)
            ))),
        }
    }
}

fn on_path(name: &str) -> Option<PathBuf> {
    let paths = std::env::var_os("PATH")?;
    std::env::split_paths(&paths)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

/// Installed compilers: `$EQUIVGUARD_SOLC`, solc-select artifacts, then `solc`/`solcjs` on PATH.
/// One compiler per version, first found wins. Probed once per process.
pub fn discover_compilers() -> Vec<Compiler> {
    static FOUND: OnceLock<Vec<Compiler>> = OnceLock::new();
    FOUND.get_or_init(probe_compilers).clone()
}

fn probe_compilers() -> Vec<Compiler> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Some(p) = std::env::var_os("EQUIVGUARD_SOLC") {
        candidates.push(PathBuf::from(p));
    }
    if let Some(home) = std::env::var_os("HOME") {
        let dir = PathBuf::from(home).join(".solc-select").join("artifacts");
        let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| {
                let name = e.file_name();
                e.path().join(name)
            })
            .filter(|p| p.is_file())
            .collect();
        found.sort();
        candidates.extend(found);
    }
    candidates.extend(on_path("solc"));
    candidates.extend(on_path("solcjs"));

    let mut out: Vec<Compiler> = Vec::new();
    for c in candidates {
        if let Some(comp) = Compiler::probe(&c) {
            if !out.iter().any(|o| o.version == comp.version) {
                out.push(comp);
            }
        }
    }
    out.sort_by(|a, b| a.version.cmp(&b.version));
    out
}

#[derive(Clone, Debug, Default)]
pub struct CompileOptions {
    pub cache: Option<Cache>,
    pub compilers: Vec<Compiler>,
    pub settings: CompilerSettings,
}

impl CompileOptions {
    pub fn discover(cache: Option<Cache>) -> CompileOptions {
        CompileOptions {
            cache,
            compilers: discover_compilers(),
            settings: CompilerSettings::default(),
        }
    }
}

pub fn standard_input(sources: &[SourceUnit], settings: &CompilerSettings) -> String {
    let mut srcs = serde_json::Map::new();
    for s in sources {
        srcs.insert(s.path.clone(), json!({ "content": s.content }));
    }
    let mut st = json!({
        "optimizer": { "enabled": settings.optimizer, "runs": settings.runs },
        "outputSelection": { "*": {
            "*": ["abi", "evm.deployedBytecode.object", "evm.deployedBytecode.sourceMap",
                  "evm.deployedBytecode.immutableReferences", "evm.methodIdentifiers"],
            "": ["ast"]
        }}
    });
    if let Some(evm) = &settings.evm_version {
        st["evmVersion"] = json!(evm);
    }
    let input = json!({ "language": "Solidity", "sources": srcs, "settings": st });
    serde_json::to_string(&input).expect("json")
}

fn cache_rel(key: &str, v: &Version) -> String {
    format!("solc/{key}-{v}.json")
}

/// Versions with a cached output for exactly this input.
fn cached_versions(cache: &Cache, key: &str) -> Vec<Version> {
    let prefix = format!("{key}-");
    cache
        .list("solc")
        .into_iter()
        .filter_map(|n| {
            let rest = n.strip_prefix(&prefix)?.strip_suffix(".json")?;
            Version::parse(rest).ok()
        })
        .collect()
}

/// Lowest available version satisfying every pragma; installed and cached
/// compilers both count as available.
pub fn select_version(
    sources: &[SourceUnit],
    opts: &CompileOptions,
) -> Result<Version, ArtifactError> {
    let mut avail: Vec<Version> = opts.compilers.iter().map(|c| c.version.clone()).collect();
    if let Some(cache) = &opts.cache {
        let key = sha256_hex(standard_input(sources, &opts.settings).as_bytes());
        avail.extend(cached_versions(cache, &key));
    }
    avail.sort();
    avail.dedup();
    let pragmas: Vec<&str> = sources.iter().filter_map(|s| s.declared_pragma.as_deref()).collect();
    avail
        .into_iter()
        .find(|v| pragmas.iter().all(|p| pragma_allows(p, v)))
        .ok_or_else(|| ArtifactError::CompilerNotFound(pragmas.join(" && ")))
}

/// Compiles with a pinned version, or the selected one when `version` is `None`.
pub fn compile_auto(
    sources: &[SourceUnit],
    version: Option<&Version>,
    opts: &CompileOptions,
) -> Result<Vec<CompilationArtifact>, ArtifactError> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let v = match version {
        Some(v) => v.clone(),
        None => select_version(sources, opts)?,
    };
    compile(sources, &v, opts)
}

pub fn compile(
    sources: &[SourceUnit],
    version: &Version,
    opts: &CompileOptions,
) -> Result<Vec<CompilationArtifact>, ArtifactError> {
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let input = standard_input(sources, &opts.settings);
    let key = sha256_hex(input.as_bytes());
    let rel = cache_rel(&key, version);

    let cached = opts.cache.as_ref().and_then(|c| c.read(&rel));
    let output = match cached {
        Some(bytes) => String::from_utf8(bytes).map_err(|e| ArtifactError::BadOutput(e.to_string()))?,
        None => {
            let comp = opts
                .compilers
                .iter()
                .find(|c| &c.version == version)
                .ok_or_else(|| ArtifactError::CompilerNotFound(version.to_string()))?;
            let out = comp.run(&input)?;
            let parsed: Value =
                serde_json::from_str(&out).map_err(|e| ArtifactError::BadOutput(e.to_string()))?;
            check_errors(&parsed)?;
            if let Some(cache) = &opts.cache {
                let _g = cache.lock(&rel)?;
                cache.write_atomic(&rel, out.as_bytes())?;
            }
            out
        }
    };
    let parsed: Value =
        serde_json::from_str(&output).map_err(|e| ArtifactError::BadOutput(e.to_string()))?;
    check_errors(&parsed)?;
    artifacts_from_output(sources, &parsed, version, &opts.settings)
}

fn check_errors(out: &Value) -> Result<(), ArtifactError> {
    static NOT_FOUND: OnceLock<Regex> = OnceLock::new();
    let nf = NOT_FOUND.get_or_init(|| Regex::new(r#"Source "([^"]+)" not found"#).unwrap());
    let mut errs = Vec::new();
    for e in out.get("errors").and_then(Value::as_array).into_iter().flatten() {
        if e.get("severity").and_then(Value::as_str) != Some("error") {
            continue;
        }
        let msg = e
            .get("formattedMessage")
            .or_else(|| e.get("message"))
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        if let Some(c) = nf.captures(&msg) {
            return Err(ArtifactError::ImportUnresolved(c[1].to_string()));
        }
        errs.push(msg);
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ArtifactError::CompileError(errs))
    }
}

fn artifacts_from_output(
    inputs: &[SourceUnit],
    out: &Value,
    version: &Version,
    settings: &CompilerSettings,
) -> Result<Vec<CompilationArtifact>, ArtifactError> {
    let srcs = out
        .get("sources")
        .and_then(Value::as_object)
        .ok_or_else(|| ArtifactError::BadOutput("missing sources".into()))?;
    let mut by_id: BTreeMap<usize, (SourceUnit, AstNode)> = BTreeMap::new();
    for (path, s) in srcs {
        let id = s.get("id").and_then(Value::as_u64).unwrap_or(0) as usize;
        let ast = s
            .get("ast")
            .and_then(convert)
            .ok_or_else(|| ArtifactError::BadOutput(format!("{path}: missing ast")))?;
        let unit = inputs
            .iter()
            .find(|u| &u.path == path)
            .cloned()
            .ok_or_else(|| ArtifactError::BadOutput(format!("unknown source {path}")))?;
        by_id.insert(id, (unit, ast));
    }
    if by_id.keys().copied().ne(0..by_id.len()) {
        return Err(ArtifactError::BadOutput("non-contiguous source ids".into()));
    }
    let sources: Arc<Vec<SourceUnit>> = Arc::new(by_id.values().map(|(u, _)| u.clone()).collect());
    let root = Arc::new(AstNode {
        id: -1,
        kind: AstKind::Root,
        src: SrcRange::default(),
        role: "root".into(),
        index: None,
        attributes: BTreeMap::new(),
        children: by_id.into_values().map(|(_, a)| a).collect(),
        opaque: false,
    });

    let mut artifacts = Vec::new();
    let contracts = out.get("contracts").and_then(Value::as_object);
    for (path, per_file) in contracts.into_iter().flatten() {
        let Some(unit_ast) = root
            .children
            .iter()
            .find(|u| u.str_attr("absolutePath") == Some(path.as_str()))
        else {
            continue;
        };
        for (name, c) in per_file.as_object().into_iter().flatten() {
            let Some(def) = unit_ast.children.iter().find(|n| {
                n.kind == AstKind::ContractDefinition && n.name() == Some(name.as_str())
            }) else {
                continue;
            };
            let kind = def.str_attr("contractKind").unwrap_or("contract").to_string();
            if kind == "interface" || def.bool_attr("abstract") {
                continue;
            }
            let dep = &c["evm"]["deployedBytecode"];
            let code_hex = dep["object"].as_str().unwrap_or("");
            let code = hex::decode(code_hex)
                .map_err(|e| ArtifactError::BadOutput(format!("{name}: bytecode hex: {e}")))?;
            if code.is_empty() {
                continue;
            }
            let n_instr = disassemble_runtime(&code).map(|v| v.len()).unwrap_or(0);
            let mut source_map = decompress_source_map(dep["sourceMap"].as_str().unwrap_or(""), n_instr);
            // indices past the user sources point at compiler-generated utility code
            for e in &mut source_map {
                if e.range.is_some_and(|r| r.file.is_none_or(|f| f >= sources.len())) {
                    e.range = None;
                }
            }
            let abi = parse_abi(&c["abi"]);
            if let Some(ids) = c["evm"]["methodIdentifiers"].as_object() {
                for f in &abi {
                    let expected = ids.get(&f.signature).and_then(Value::as_str);
                    if expected != Some(f.selector_hex().as_str()) {
                        return Err(ArtifactError::BadOutput(format!(
                            "selector mismatch for {}",
                            f.signature
                        )));
                    }
                }
            }
            let mut immutable_references = BTreeMap::new();
            if let Some(refs) = dep["immutableReferences"].as_object() {
                for (id, list) in refs {
                    let spans = list
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter_map(|r| Some((r["start"].as_u64()? as usize, r["length"].as_u64()? as usize)))
                        .collect();
                    if let Ok(id) = id.parse() {
                        immutable_references.insert(id, spans);
                    }
                }
            }
            artifacts.push(CompilationArtifact {
                contract_name: name.clone(),
                source_path: path.clone(),
                contract_id: def.id,
                ast_root: root.clone(),
                sources: sources.clone(),
                deployed_bytecode: code,
                source_map,
                abi,
                compiler_version: version.clone(),
                settings: settings.clone(),
                immutable_references,
                contract_kind: kind,
            });
        }
    }
    artifacts.sort_by(|a, b| (&a.source_path, &a.contract_name).cmp(&(&b.source_path, &b.contract_name)));
    Ok(artifacts)
}

/// Reads every `.sol` file under `dir` (recursively) as sources with paths relative to `dir`.
pub fn load_source_dir(dir: &Path) -> Result<Vec<SourceUnit>, ArtifactError> {
    let mut files = Vec::new();
    collect_sol(dir, dir, &mut files)?;
    files.sort_by(|a: &SourceUnit, b| a.path.cmp(&b.path));
    Ok(files)
}

fn collect_sol(base: &Path, dir: &Path, out: &mut Vec<SourceUnit>) -> Result<(), ArtifactError> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    for e in entries {
        let e = e.map_err(io_err(dir))?;
        let p = e.path();
        if p.is_dir() {
            collect_sol(base, &p, out)?;
        } else if p.extension().is_some_and(|x| x == "sol") {
            let content = std::fs::read_to_string(&p).map_err(io_err(&p))?;
            let rel = p.strip_prefix(base).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            out.push(SourceUnit::new(rel, content)?);
        }
    }
    Ok(())
}

/// A single file as a one-element source set (path = file name).
pub fn load_source_file(path: &Path) -> Result<Vec<SourceUnit>, ArtifactError> {
    let content = std::fs::read_to_string(path).map_err(io_err(path))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input.sol".into());
    Ok(vec![SourceUnit::new(name, content)?])
}
