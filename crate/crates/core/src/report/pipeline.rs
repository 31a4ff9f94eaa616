use super::metrics::{EntryFailure, EvalStats};
use super::{InputDescriptor, Report, ToolInfo, SCHEMA_VERSION};
use crate::artifact::{
    compile_auto, load_entry, load_remote, load_source_dir, load_source_file, ArtifactError, Cache, Chain,
    CompilationArtifact, CompileOptions, ExplorerQuery, Manifest,
};
use crate::detect::{run_all, DetectConfig};
use crate::Smell;
use rayon::prelude::*;
use semver::Version;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub enum Input {
    Path(PathBuf),
    Explorer { chain: Chain, address: String },
}

#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    pub detect: DetectConfig,
    pub compile: CompileOptions,
    /// Compiler version pin.
    pub solc: Option<Version>,
    pub cache: Cache,
    pub api_key: Option<String>,
}

impl AnalyzeOptions {
    pub fn discover(cache: Cache) -> AnalyzeOptions {
        AnalyzeOptions {
            detect: DetectConfig::default(),
            compile: CompileOptions::discover(Some(cache.clone())),
            solc: None,
            cache,
            api_key: None,
        }
    }
}

/// Compiles `input` and runs every enabled detector over the result.
pub fn analyze(input: &Input, opts: &AnalyzeOptions) -> Result<Report, ArtifactError> {
    let t = Instant::now();
    let (desc, arts) = match input {
        Input::Path(p) => {
            let (desc, sources) = if p.is_dir() {
                (InputDescriptor::Directory { path: p.display().to_string() }, load_source_dir(p)?)
            } else {
                (InputDescriptor::File { path: p.display().to_string() }, load_source_file(p)?)
            };
            (desc, compile_auto(&sources, opts.solc.as_ref(), &opts.compile)?)
        }
        Input::Explorer { chain, address } => {
            let q = ExplorerQuery::new(chain.clone(), address, opts.api_key.clone())?;
            let arts = load_remote(&q, opts.solc.as_ref(), &opts.compile, &opts.cache)?;
            (
                InputDescriptor::Explorer {
                    chain: chain.to_string(),
                    address: q.address,
                },
                arts,
            )
        }
    };
    Ok(analyze_artifacts(desc, &arts, &opts.detect, t.elapsed()))
}

pub fn analyze_artifacts(
    input: InputDescriptor,
    artifacts: &[CompilationArtifact],
    config: &DetectConfig,
    compile: Duration,
) -> Report {
    let mut out = run_all(artifacts, config);
    out.phase_ms.insert("compile".into(), compile.as_millis() as u64);
    Report::assemble(input, artifacts, config, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub name: String,
    pub labels: Option<BTreeSet<Smell>>,
    pub predicted: BTreeSet<Smell>,
    pub report: Option<Report>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub schema_version: String,
    pub tool: ToolInfo,
    pub stats: EvalStats,
    pub entries: Vec<EntryOutcome>,
}

impl CorpusReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus report serializes")
    }
}

/// Analyzes every manifest entry on a pool of `workers` threads (0 = one per core).
pub fn run_corpus(manifest: &Path, opts: &AnalyzeOptions, workers: usize) -> Result<CorpusReport, ArtifactError> {
    let m = Manifest::load(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ArtifactError::Io {
            path: manifest.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    let entries: Vec<EntryOutcome> = pool.install(|| {
        m.entries
            .par_iter()
            .map(|e| {
                let t = Instant::now();
                let labels = e.labels.as_ref().map(|l| l.iter().copied().collect());
                match load_entry(e, base, &opts.compile, &opts.cache) {
                    Ok(arts) => {
                        let desc = match &e.source_dir {
                            Some(d) => InputDescriptor::File { path: d.clone() },
                            None => InputDescriptor::Explorer {
                                chain: e.chain.clone().unwrap_or_default(),
                                address: e.address.clone().unwrap_or_default(),
                            },
                        };
                        let report = analyze_artifacts(desc, &arts, &opts.detect, t.elapsed());
                        EntryOutcome {
                            name: e.name.clone(),
                            labels,
                            predicted: report.findings().map(|f| f.smell).collect(),
                            report: Some(report),
                            error: None,
                        }
                    }
                    Err(err) => EntryOutcome {
                        name: e.name.clone(),
                        labels,
                        predicted: BTreeSet::new(),
                        report: None,
                        error: Some(err.to_string()),
                    },
                }
            })
            .collect()
    });
    Ok(CorpusReport {
        schema_version: SCHEMA_VERSION.into(),
        tool: ToolInfo::current(),
        stats: evaluate_outcomes(&opts.detect.enabled, &entries),
        entries,
    })
}

/// Metrics over labeled, successfully analyzed entries; the rest are listed.
pub fn evaluate_outcomes(smells: &BTreeSet<Smell>, entries: &[EntryOutcome]) -> EvalStats {
    let rows = entries
        .iter()
        .filter(|e| e.error.is_none())
        .filter_map(|e| e.labels.as_ref().map(|l| (l, &e.predicted)));
    let mut stats = EvalStats::from_predictions(smells, rows);
    for e in entries {
        if let Some(err) = &e.error {
            stats.failures.push(EntryFailure {
                name: e.name.clone(),
                error: err.clone(),
            });
        } else if e.labels.is_none() {
            stats.unlabeled.push(e.name.clone());
        }
    }
    stats
}
