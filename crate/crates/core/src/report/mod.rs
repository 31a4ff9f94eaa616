//! Analysis reports and their text, JSON and SARIF renderings.

mod metrics;
mod pipeline;
mod sarif;

pub use metrics::{percent, ratio, EntryFailure, EvalStats, SmellStats};
pub use pipeline::{analyze, analyze_artifacts, evaluate_outcomes, run_corpus, AnalyzeOptions, CorpusReport, EntryOutcome, Input};
pub use sarif::{emit_sarif, SARIF_VERSION};

use crate::artifact::CompilationArtifact;
use crate::detect::{sort_findings, DetectConfig, DetectOutput, Diagnostic, Finding, Mode, Verification};
use crate::Smell;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: &str = "1";

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> ToolInfo {
        ToolInfo {
            name: "equivguard".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputDescriptor {
    File { path: String },
    Directory { path: String },
    Explorer { chain: String, address: String },
    Artifacts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompilerInfo {
    pub version: String,
    pub optimizer: bool,
    pub runs: u32,
    pub evm_version: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub name: String,
    pub source_path: String,
    pub findings: Vec<Finding>,
}

/// A verification that stopped on a time or exploration bound.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BudgetEvent {
    pub kind: String,
    pub contract: String,
    pub function: String,
    pub smell: Smell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub tool: ToolInfo,
    pub input: InputDescriptor,
    pub compiler: Option<CompilerInfo>,
    pub mode: Mode,
    pub detectors: Vec<Smell>,
    pub contracts: Vec<ContractReport>,
    pub diagnostics: Vec<Diagnostic>,
    /// Milliseconds per phase.
    pub timing: BTreeMap<String, u64>,
    pub budget_events: Vec<BudgetEvent>,
}

fn budget_kind(f: &Finding) -> Option<&'static str> {
    if f.timed_out {
        return Some("timeout");
    }
    match &f.verification {
        Verification::Unknown { reason } => match reason.as_str() {
            "solver-timeout" => Some("solver-timeout"),
            "budget" => Some("step-bound"),
            "per-contract-timeout" => Some("timeout"),
            _ => None,
        },
        _ => None,
    }
}

impl Report {
    pub fn new(input: InputDescriptor, config: &DetectConfig) -> Report {
        Report {
            schema_version: SCHEMA_VERSION.into(),
            tool: ToolInfo::current(),
            input,
            compiler: None,
            mode: config.mode,
            detectors: config.enabled.iter().copied().collect(),
            contracts: Vec::new(),
            diagnostics: Vec::new(),
            timing: BTreeMap::new(),
            budget_events: Vec::new(),
        }
    }

    /// Groups detector output by contract, one entry per compiled contract.
    pub fn assemble(
        input: InputDescriptor,
        artifacts: &[CompilationArtifact],
        config: &DetectConfig,
        out: DetectOutput,
    ) -> Report {
        let mut r = Report::new(input, config);
        r.compiler = artifacts.first().map(|a| CompilerInfo {
            version: a.compiler_version.to_string(),
            optimizer: a.settings.optimizer,
            runs: a.settings.runs,
            evm_version: a.settings.evm_version.clone(),
        });
        let mut by_name: BTreeMap<(String, String), Vec<Finding>> = artifacts
            .iter()
            .map(|a| ((a.source_path.clone(), a.contract_name.clone()), Vec::new()))
            .collect();
        let path_of: BTreeMap<&str, &str> = artifacts
            .iter()
            .map(|a| (a.contract_name.as_str(), a.source_path.as_str()))
            .collect();
        for f in out.findings {
            if let Some(k) = budget_kind(&f) {
                r.budget_events.push(BudgetEvent {
                    kind: k.into(),
                    contract: f.contract.clone(),
                    function: f.function.clone(),
                    smell: f.smell,
                });
            }
            let path = path_of
                .get(f.contract.as_str())
                .map_or_else(|| f.primary_location.file.clone(), |p| p.to_string());
            by_name.entry((path, f.contract.clone())).or_default().push(f);
        }
        r.contracts = by_name
            .into_iter()
            .map(|((source_path, name), mut findings)| {
                sort_findings(&mut findings);
                ContractReport {
                    name,
                    source_path,
                    findings,
                }
            })
            .collect();
        r.diagnostics = out.diagnostics;
        r.timing = out.phase_ms;
        r.budget_events.sort();
        r
    }

    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.contracts.iter().flat_map(|c| c.findings.iter())
    }

    pub fn finding_count(&self) -> usize {
        self.contracts.iter().map(|c| c.findings.len()).sum()
    }

    pub fn exit_code(&self) -> i32 {
        exit_code_for(self.finding_count())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Report> {
        serde_json::from_str(s)
    }

    /// One `SMELL<TAB>file:line<TAB>confidence<TAB>message` line per finding.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for f in self.findings() {
            out.push_str(&text_line(f));
            out.push('\n');
        }
        out
    }
}

pub fn exit_code_for(findings: usize) -> i32 {
    if findings == 0 {
        EXIT_CLEAN
    } else {
        EXIT_FINDINGS
    }
}

fn one_line(s: &str) -> String {
    s.chars().map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c }).collect()
}

pub fn text_line(f: &Finding) -> String {
    format!(
        "{}\t{}:{}\t{}\t{}",
        f.smell,
        one_line(&f.primary_location.file),
        f.primary_location.line,
        f.confidence.as_str(),
        one_line(&f.message)
    )
}
