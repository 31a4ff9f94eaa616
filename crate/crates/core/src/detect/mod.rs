//! The six smell detectors and the pipeline that verifies their candidates.

mod ccra;
mod compare;
mod fgr;
mod pca;
mod verify;

pub use ccra::detect_ccra;
pub use compare::{detect_bhm, detect_gli, detect_tdt};
pub use fgr::detect_fgr;
pub use pca::detect_pca;
pub use verify::verify_candidate;

use crate::artifact::{CompilationArtifact, SrcRange};
use crate::evm::Opcode;
use crate::ipdg::{build_ipdg, EdgeKind, Ipdg, NodeId, StmtKind};
use crate::symexec::{PathCheck, Program, SolverConfig};
use crate::taint::{PathVerdict, TaintPath};
use crate::Smell;
use rayon::prelude::*;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

pub const DEFAULT_TDT_THRESHOLD: u64 = 256;
pub const DEFAULT_BHM_THRESHOLD: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Confirmed,
    Likely,
    Static,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Confirmed => "confirmed",
            Confidence::Likely => "likely",
            Confidence::Static => "static",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    StaticOnly,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "full" => Ok(Mode::Full),
            "static-only" | "static" => Ok(Mode::StaticOnly),
            _ => Err(format!("unknown mode `{s}` (expected full or static-only)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub start: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verification {
    /// Solver model for the path, as hex words, and whether it replayed concretely.
    Reachable { model: BTreeMap<String, String>, replayed: bool },
    Unreachable,
    Unknown { reason: String },
    NotRun,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub smell: Smell,
    pub contract: String,
    pub function: String,
    pub primary_location: Location,
    pub witness: TaintPath,
    pub verification: Verification,
    pub confidence: Confidence,
    pub message: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
    /// Named path checks evaluated during verification.
    #[serde(default)]
    pub checks: BTreeMap<String, Option<bool>>,
    /// Set when the per-contract budget ran out before this finding was verified.
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub message: String,
    pub location: Option<Location>,
}

/// How a candidate is confirmed by symbolic execution.
#[derive(Clone, Debug)]
pub struct Probe {
    pub contract: String,
    /// Function whose body holds the target instructions.
    pub function: String,
    /// Source range of the instructions execution must reach.
    pub target: SrcRange,
    pub opcodes: Option<Vec<Opcode>>,
    pub prefer: Vec<SrcRange>,
    /// Checks that must hold for the finding to be confirmed.
    pub required: Vec<PathCheck>,
    pub recorded: Vec<PathCheck>,
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub finding: Finding,
    pub probe: Probe,
    pub sink: NodeId,
}

#[derive(Clone, Debug)]
pub struct DetectConfig {
    pub enabled: BTreeSet<Smell>,
    pub mode: Mode,
    pub tdt_threshold: U256,
    pub bhm_threshold: U256,
    pub unroll: u32,
    pub solver: Option<SolverConfig>,
    /// Per-contract budget.
    pub budget: Duration,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            enabled: Smell::ALL.into_iter().collect(),
            mode: Mode::Full,
            tdt_threshold: U256::from(DEFAULT_TDT_THRESHOLD),
            bhm_threshold: U256::from(DEFAULT_BHM_THRESHOLD),
            unroll: crate::symexec::DEFAULT_UNROLL,
            solver: SolverConfig::discover(Duration::from_secs(5)),
            budget: Duration::from_secs(60),
        }
    }
}

/// Graphs shared by all detectors for one compilation.
pub struct Analysis<'a> {
    pub artifacts: &'a [CompilationArtifact],
    pub ipdg: Ipdg,
    pub programs: BTreeMap<String, Program>,
    pub config: &'a DetectConfig,
    pub diagnostics: Vec<Diagnostic>,
}

impl<'a> Analysis<'a> {
    pub fn new(artifacts: &'a [CompilationArtifact], config: &'a DetectConfig) -> Analysis<'a> {
        let ipdg = build_ipdg(artifacts);
        Analysis::with_ipdg(artifacts, ipdg, config)
    }

    pub fn with_ipdg(artifacts: &'a [CompilationArtifact], ipdg: Ipdg, config: &'a DetectConfig) -> Analysis<'a> {
        let mut diagnostics = Vec::new();
        let mut programs = BTreeMap::new();
        for a in artifacts {
            match Program::from_artifact(a) {
                Ok(p) => {
                    programs.insert(a.contract_name.clone(), p);
                }
                Err(e) => diagnostics.push(Diagnostic {
                    kind: "disassembly-failed".into(),
                    message: format!("{}: {e}", a.contract_name),
                    location: None,
                }),
            }
        }
        Analysis {
            artifacts,
            ipdg,
            programs,
            config,
            diagnostics,
        }
    }

    pub fn artifact(&self, contract: &str) -> Option<&CompilationArtifact> {
        self.artifacts.iter().find(|a| a.contract_name == contract)
    }

    /// Whether the node belongs to one of the compiled (deployable) contracts.
    pub fn is_analyzed(&self, n: NodeId) -> bool {
        self.artifact(&self.ipdg.node(n).contract).is_some()
    }

    pub fn location(&self, r: &SrcRange) -> Location {
        let found = self.artifacts.first().and_then(|a| a.location(r));
        let (file, line, column) = found.unwrap_or_else(|| ("<unknown>".into(), 0, 0));
        Location {
            file,
            line,
            column,
            start: r.start,
            length: r.length,
        }
    }

    pub fn text(&self, r: &SrcRange) -> Option<&str> {
        self.artifacts.first().and_then(|a| a.text(r))
    }

    /// Bare function name as written in source.
    pub fn function_name(&self, n: NodeId) -> String {
        let f = &self.ipdg.node(n).function;
        f.split(['@', '/']).next().unwrap_or(f).to_string()
    }

    /// Builds a static-confidence candidate anchored at statement `n`.
    pub fn candidate(&self, smell: Smell, n: NodeId, witness: TaintPath, message: String, probe: Probe) -> Candidate {
        let node = self.ipdg.node(n);
        Candidate {
            finding: Finding {
                smell,
                contract: node.contract.clone(),
                function: self.function_name(n),
                primary_location: self.location(&node.src),
                witness,
                verification: Verification::NotRun,
                confidence: Confidence::Static,
                message,
                metadata: BTreeMap::new(),
                checks: BTreeMap::new(),
                timed_out: false,
            },
            probe,
            sink: n,
        }
    }

    /// Probe that reaches the instructions of statement `n` (or of `range`).
    pub fn probe_at(&self, n: NodeId, range: SrcRange, opcodes: Option<Vec<Opcode>>, witness: &TaintPath) -> Probe {
        let node = self.ipdg.node(n);
        let mut prefer: Vec<SrcRange> = witness
            .nodes
            .iter()
            .map(|w| self.ipdg.node(*w))
            .filter(|w| w.contract == node.contract && w.stmt_kind != StmtKind::StateVarDecl)
            .map(|w| w.src)
            .collect();
        prefer.push(range);
        Probe {
            contract: node.contract.clone(),
            function: node.fn_key(),
            target: range,
            opcodes,
            prefer,
            required: Vec::new(),
            recorded: Vec::new(),
        }
    }

    /// External functions through which `fn_key` can be entered.
    pub fn entry_functions(&self, fn_key: &str) -> Vec<String> {
        let g = &self.ipdg;
        let mut out = Vec::new();
        let mut seen = BTreeSet::from([fn_key.to_string()]);
        let mut work = VecDeque::from([fn_key.to_string()]);
        while let Some(k) = work.pop_front() {
            let Some(f) = g.functions.get(&k) else { continue };
            if g.node(f.entry).external_entry {
                out.push(k.clone());
            }
            for e in g.incoming(f.entry) {
                if e.kind == EdgeKind::Call {
                    let caller = g.node(e.from).fn_key();
                    if seen.insert(caller.clone()) {
                        work.push_back(caller);
                    }
                }
            }
        }
        out
    }

    /// ABI selectors of the functions through which `fn_key` is entered.
    pub fn selectors(&self, fn_key: &str) -> Vec<u32> {
        let Some(contract) = fn_key.split('.').next() else { return Vec::new() };
        let Some(a) = self.artifact(contract) else { return Vec::new() };
        let mut out = Vec::new();
        for k in self.entry_functions(fn_key) {
            let f = &self.ipdg.functions[&k];
            let name = f.name.split(['@', '/']).next().unwrap_or(&f.name);
            for abi in &a.abi {
                if abi.name == name && abi_arity(&abi.signature) == f.params.len() && !out.contains(&abi.selector_u32()) {
                    out.push(abi.selector_u32());
                }
            }
        }
        out
    }
}

fn abi_arity(signature: &str) -> usize {
    let Some(open) = signature.find('(') else { return 0 };
    let inner = &signature[open + 1..signature.len().saturating_sub(1)];
    if inner.is_empty() {
        return 0;
    }
    let mut depth = 0i32;
    let mut n = 1;
    for ch in inner.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => n += 1,
            _ => {}
        }
    }
    n
}

/// The taint path to report for a sink: the first suspicious one, else a trivial path.
pub(crate) fn pick_witness(smell: Smell, paths: &[TaintPath], sink: NodeId) -> TaintPath {
    let mine: Vec<&TaintPath> = paths.iter().filter(|p| p.sink() == sink).collect();
    mine.iter()
        .find(|p| p.verdict == PathVerdict::Suspicious)
        .or(mine.first())
        .map(|p| (*p).clone())
        .unwrap_or(TaintPath {
            spec: smell,
            nodes: vec![sink],
            sanitizers_hit: Vec::new(),
            verdict: PathVerdict::Suspicious,
            low_confidence: false,
        })
}

/// Statement executed only once the branch at `n` passes.
pub(crate) fn guarded_statement(g: &Ipdg, n: NodeId) -> Option<NodeId> {
    let node = g.node(n);
    match node.stmt_kind {
        StmtKind::If | StmtKind::Loop => g
            .outgoing(n)
            .filter(|e| e.kind == EdgeKind::Control)
            .map(|e| e.to)
            .filter(|t| g.node(*t).stmt_kind != StmtKind::FunctionExit)
            .min_by_key(|t| g.node(*t).order),
        StmtKind::Require => {
            let f = g.function_of(n)?;
            f.body
                .iter()
                .copied()
                .filter(|b| g.node(*b).order > node.order)
                .min_by_key(|b| g.node(*b).order)
        }
        _ => None,
    }
}

#[derive(Clone, Debug, Default)]
pub struct DetectOutput {
    pub findings: Vec<Finding>,
    pub diagnostics: Vec<Diagnostic>,
    /// The per-contract budget expired before every candidate was verified.
    pub timed_out: bool,
    pub phase_ms: BTreeMap<String, u64>,
}

pub fn detect(a: &Analysis, smell: Smell) -> (Vec<Candidate>, Vec<Diagnostic>) {
    match smell {
        Smell::Ccra => detect_ccra(a),
        Smell::Tdt => (detect_tdt(a), Vec::new()),
        Smell::Pca => (detect_pca(a), Vec::new()),
        Smell::Gli => (detect_gli(a), Vec::new()),
        Smell::Fgr => detect_fgr(a),
        Smell::Bhm => (detect_bhm(a), Vec::new()),
    }
}

/// Runs the enabled detectors over one compilation and verifies their candidates.
pub fn run_all(artifacts: &[CompilationArtifact], config: &DetectConfig) -> DetectOutput {
    let t0 = Instant::now();
    let ipdg = build_ipdg(artifacts);
    let t_ipdg = t0.elapsed();
    let t1 = Instant::now();
    let analysis = Analysis::with_ipdg(artifacts, ipdg, config);
    let t_cfg = t1.elapsed();
    run_analysis(&analysis, config, t0 + config.budget, [("ipdg", t_ipdg), ("cfg", t_cfg)])
}

pub fn run_analysis<const N: usize>(
    analysis: &Analysis,
    config: &DetectConfig,
    deadline: Instant,
    phases: [(&str, Duration); N],
) -> DetectOutput {
    let mut out = DetectOutput {
        diagnostics: analysis.diagnostics.clone(),
        ..Default::default()
    };
    for (k, d) in phases {
        out.phase_ms.insert(k.to_string(), d.as_millis() as u64);
    }
    let t = Instant::now();
    let smells: Vec<Smell> = config.enabled.iter().copied().collect();
    let per: Vec<(Vec<Candidate>, Vec<Diagnostic>)> = smells.par_iter().map(|s| detect(analysis, *s)).collect();
    out.phase_ms.insert("taint".into(), t.elapsed().as_millis() as u64);
    let mut candidates = Vec::new();
    for (c, d) in per {
        candidates.extend(c);
        out.diagnostics.extend(d);
    }
    let t = Instant::now();
    let verified: Vec<(Option<Finding>, Vec<Diagnostic>, Duration)> = match config.mode {
        Mode::StaticOnly => candidates
            .into_iter()
            .map(|c| (Some(c.finding), Vec::new(), Duration::ZERO))
            .collect(),
        Mode::Full => candidates
            .par_iter()
            .map(|c| verify_candidate(analysis, c, deadline))
            .collect(),
    };
    let elapsed = t.elapsed();
    let solve: Duration = verified.iter().map(|v| v.2).sum();
    // summed over parallel workers, so it can exceed the symexec wall time
    out.phase_ms.insert("symexec".into(), elapsed.as_millis() as u64);
    out.phase_ms.insert("solve".into(), solve.as_millis() as u64);
    for (f, d, _) in verified {
        out.diagnostics.extend(d);
        if let Some(f) = f {
            out.timed_out |= f.timed_out;
            out.findings.push(f);
        }
    }
    sort_findings(&mut out.findings);
    out.diagnostics.sort();
    out.diagnostics.dedup();
    out
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        (a.smell, &a.primary_location.file, a.primary_location.start, &a.contract).cmp(&(
            b.smell,
            &b.primary_location.file,
            b.primary_location.start,
            &b.contract,
        ))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abi_arity_counts_top_level_params() {
        assert_eq!(abi_arity("f()"), 0);
        assert_eq!(abi_arity("f(uint256)"), 1);
        assert_eq!(abi_arity("f(address,(uint256,bytes)[],bytes32)"), 3);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("full".parse::<Mode>(), Ok(Mode::Full));
        assert_eq!("static-only".parse::<Mode>(), Ok(Mode::StaticOnly));
        assert!("fast".parse::<Mode>().is_err());
    }
}
