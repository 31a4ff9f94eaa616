use super::{Analysis, Candidate, Confidence, Diagnostic, Finding, Verification};
use crate::symexec::{replay_model, verify, ExecConfig, Guidance, PathCheck, Status, UnknownReason};
use std::time::{Duration, Instant};

fn reason_str(r: UnknownReason) -> &'static str {
    match r {
        UnknownReason::Timeout => "solver-timeout",
        UnknownReason::Budget => "budget",
        UnknownReason::SolverUnavailable => "solver-unavailable",
    }
}

fn likely(mut f: Finding, reason: &str) -> Finding {
    f.confidence = Confidence::Likely;
    f.verification = Verification::Unknown { reason: reason.into() };
    f
}

/// Upgrades a candidate to Confirmed, downgrades it to Likely, or drops it
/// when no entry point reaches the sink with the required checks holding.
pub fn verify_candidate(a: &Analysis, c: &Candidate, deadline: Instant) -> (Option<Finding>, Vec<Diagnostic>, Duration) {
    let mut diags = Vec::new();
    let mut solve = Duration::ZERO;
    let f = c.finding.clone();
    if Instant::now() >= deadline {
        let mut f = likely(f, "per-contract-timeout");
        f.timed_out = true;
        return (Some(f), diags, solve);
    }
    let Some(solver) = &a.config.solver else {
        return (Some(likely(f, "solver-unavailable")), diags, solve);
    };
    let Some(prog) = a.programs.get(&c.probe.contract) else {
        return (Some(likely(f, "no-bytecode")), diags, solve);
    };
    let ops = c.probe.opcodes.clone();
    let targets = prog.offsets_within(&c.probe.target, |op| ops.as_ref().is_none_or(|o| o.contains(&op)));
    if targets.is_empty() {
        diags.push(Diagnostic {
            kind: "no-target-instructions".into(),
            message: format!("{} at {}: sink has no mapped bytecode", f.smell, f.function),
            location: Some(f.primary_location.clone()),
        });
        return (Some(likely(f, "no-target-instructions")), diags, solve);
    }
    let guidance = Guidance {
        targets,
        prefer: c.probe.prefer.clone(),
    };
    let config = ExecConfig {
        unroll: a.config.unroll,
        deadline: Some(deadline),
        ..ExecConfig::default()
    };
    let mut checks: Vec<PathCheck> = c.probe.required.clone();
    checks.extend(c.probe.recorded.iter().copied());
    let selectors: Vec<Option<u32>> = match a.selectors(&c.probe.function) {
        s if s.is_empty() => vec![None],
        s => s.into_iter().map(Some).collect(),
    };
    let mut unknown: Option<String> = None;
    let mut failed: Option<PathCheck> = None;
    for sel in selectors {
        let v = verify(prog, sel, &guidance, &config, solver, &checks);
        solve += v.solver_time;
        match &v.status {
            Status::Reachable(model) => {
                let state = v.state.as_ref().expect("reachable verdicts carry their state");
                if !replay_model(state, model) {
                    diags.push(Diagnostic {
                        kind: "model-replay-failed".into(),
                        message: format!("{} at {}: solver model does not replay", f.smell, f.function),
                        location: Some(f.primary_location.clone()),
                    });
                    unknown.get_or_insert("replay-failed".into());
                    continue;
                }
                let mut undecided = false;
                let mut bad = None;
                for r in &c.probe.required {
                    match v.check(*r) {
                        Some(true) => {}
                        Some(false) => bad = Some(*r),
                        None => undecided = true,
                    }
                }
                if let Some(b) = bad {
                    failed = Some(b);
                    continue;
                }
                if undecided {
                    unknown.get_or_insert("check-undecided".into());
                    continue;
                }
                let mut f = f;
                f.confidence = Confidence::Confirmed;
                f.checks = v.checks.clone();
                f.verification = Verification::Reachable {
                    model: model.iter().map(|(k, v)| (k.clone(), format!("{v:#x}"))).collect(),
                    replayed: true,
                };
                return (Some(f), diags, solve);
            }
            Status::Unreachable => {}
            Status::Unknown(r) => {
                unknown.get_or_insert(reason_str(*r).into());
            }
        }
    }
    if let Some(r) = unknown {
        let mut f = likely(f, &r);
        f.timed_out = Instant::now() >= deadline;
        return (Some(f), diags, solve);
    }
    let why = match failed {
        Some(chk) => format!("check {} failed", chk.name()),
        None => "sink unreachable".to_string(),
    };
    diags.push(Diagnostic {
        kind: "filtered-by-verification".into(),
        message: format!("{} at {}: {why}", f.smell, f.function),
        location: Some(f.primary_location.clone()),
    });
    (None, diags, solve)
}
