//! Reachability verdicts for guided paths, plus smell-specific path checks.

use super::exec::{ExecConfig, ExecError, Executor, Guidance, PathOutcome, Program};
use super::expr::{app_key, ExprId, ExprPool, Model, Node};
use super::solver::{SatResult, Session, SolverConfig, SolverError};
use super::state::SymbolicState;
use crate::evm::Opcode;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnknownReason {
    Timeout,
    Budget,
    SolverUnavailable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Reachable(Model),
    Unreachable,
    Unknown(UnknownReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PathCheck {
    ChainIdSolvable,
    TimestampRestriction,
    CallerPermission,
    BothBranches,
}

impl PathCheck {
    pub fn name(self) -> &'static str {
        match self {
            PathCheck::ChainIdSolvable => "chainid-constraint-solvable",
            PathCheck::TimestampRestriction => "timestamp-restriction-present",
            PathCheck::CallerPermission => "caller-permission-check-present",
            PathCheck::BothBranches => "both-branches-feasible",
        }
    }
}

#[derive(Debug)]
pub struct Verdict {
    pub status: Status,
    /// Check name to outcome; `None` when the solver could not decide.
    pub checks: BTreeMap<String, Option<bool>>,
    pub state: Option<Box<SymbolicState>>,
    pub solver_time: Duration,
}

impl Verdict {
    fn unknown(r: UnknownReason) -> Verdict {
        Verdict {
            status: Status::Unknown(r),
            checks: BTreeMap::new(),
            state: None,
            solver_time: Duration::ZERO,
        }
    }

    pub fn is_reachable(&self) -> bool {
        matches!(self.status, Status::Reachable(_))
    }

    pub fn check(&self, c: PathCheck) -> Option<bool> {
        self.checks.get(c.name()).copied().flatten()
    }
}

fn reason(e: &SolverError) -> UnknownReason {
    match e {
        SolverError::SolverUnavailable(_) => UnknownReason::SolverUnavailable,
        _ => UnknownReason::Timeout,
    }
}

/// Leaves (symbols and uninterpreted applications) of the given terms.
pub fn leaves(pool: &ExprPool, roots: &[ExprId]) -> Vec<ExprId> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in roots {
        pool.collect(*r, &mut seen, &mut |n, id| {
            if matches!(n, Node::Sym(_) | Node::Uf(..)) {
                out.push(id);
            }
        });
    }
    out
}

fn find_sym(pool: &ExprPool, roots: &[ExprId], name: &str) -> Option<ExprId> {
    leaves(pool, roots)
        .into_iter()
        .find(|id| matches!(pool.node(*id), Node::Sym(s) if s == name))
}

pub fn verify(
    prog: &Program,
    selector: Option<u32>,
    guidance: &Guidance,
    config: &ExecConfig,
    solver: &SolverConfig,
    checks: &[PathCheck],
) -> Verdict {
    let mut session = match Session::start(solver) {
        Ok(s) => s,
        Err(e) => return Verdict::unknown(reason(&e)),
    };
    let mut v = verify_in(&mut session, prog, selector, guidance, config, checks);
    v.solver_time = session.busy;
    v
}

fn verify_in(
    session: &mut Session,
    prog: &Program,
    selector: Option<u32>,
    guidance: &Guidance,
    config: &ExecConfig,
    checks: &[PathCheck],
) -> Verdict {
    let outcome = Executor::new(prog).run(selector, guidance, config, Some(&mut *session));
    let mut st = match outcome {
        Ok(PathOutcome::Reached(st)) => st,
        Ok(PathOutcome::Divergence { .. }) => {
            return Verdict {
                status: Status::Unreachable,
                checks: BTreeMap::new(),
                state: None,
                solver_time: Duration::ZERO,
            }
        }
        Err(ExecError::BudgetExhausted(_)) => return Verdict::unknown(UnknownReason::Budget),
    };
    let conj = st.conjuncts();
    let roots: Vec<ExprId> = conj.iter().map(|c| c.0).collect();
    let want = leaves(&st.pool, &roots);
    let model = match session.check_with_model(&st.pool, &conj, &want) {
        Ok((SatResult::Sat, m)) => m.unwrap_or_default(),
        Ok((SatResult::Unsat, _)) => {
            return Verdict {
                status: Status::Unreachable,
                checks: BTreeMap::new(),
                state: Some(st),
                solver_time: Duration::ZERO,
            }
        }
        Ok((SatResult::Unknown, _)) => return Verdict::unknown(UnknownReason::Timeout),
        Err(e) => return Verdict::unknown(reason(&e)),
    };
    let mut results = BTreeMap::new();
    for c in checks {
        let r = run_check(*c, &mut st, &model, session);
        results.insert(c.name().to_string(), r);
    }
    Verdict {
        status: Status::Reachable(model),
        checks: results,
        state: Some(st),
        solver_time: Duration::ZERO,
    }
}

fn sat(session: &mut Session, pool: &ExprPool, conj: &[(ExprId, bool)]) -> Option<bool> {
    match session.check(pool, conj) {
        Ok(SatResult::Sat) => Some(true),
        Ok(SatResult::Unsat) => Some(false),
        _ => None,
    }
}

fn restricting(st: &SymbolicState, session: &mut Session, sym: &str) -> Option<bool> {
    let conj = st.conjuncts();
    let mut undecided = false;
    for (i, (c, h)) in conj.iter().enumerate() {
        if find_sym(&st.pool, &[*c], sym).is_none() {
            continue;
        }
        let mut rest: Vec<(ExprId, bool)> = conj.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
        rest.push((*c, !*h));
        match sat(session, &st.pool, &rest) {
            Some(true) => return Some(true),
            Some(false) => {}
            None => undecided = true,
        }
    }
    if undecided {
        None
    } else {
        Some(false)
    }
}

fn run_check(c: PathCheck, st: &mut SymbolicState, model: &Model, session: &mut Session) -> Option<bool> {
    let conj = st.conjuncts();
    let roots: Vec<ExprId> = conj.iter().map(|c| c.0).collect();
    match c {
        PathCheck::ChainIdSolvable => {
            let Some(id) = find_sym(&st.pool, &roots, "CHAINID") else {
                return Some(true);
            };
            let v = model.get("CHAINID").copied().unwrap_or_default();
            let k = st.pool.constant(v);
            let eq = st.pool.op(Opcode::Eq, &[id, k]);
            let mut q = conj;
            q.push((eq, false));
            sat(session, &st.pool, &q)
        }
        PathCheck::TimestampRestriction => restricting(st, session, "TIMESTAMP"),
        PathCheck::CallerPermission => restricting(st, session, "CALLER"),
        PathCheck::BothBranches => {
            let cond = st.peek(1)?;
            let mut t = conj.clone();
            t.push((cond, true));
            let mut f = conj;
            f.push((cond, false));
            match (sat(session, &st.pool, &t), sat(session, &st.pool, &f)) {
                (Some(a), Some(b)) => Some(a && b),
                _ => None,
            }
        }
    }
}

/// Concrete replay: every branch constraint must evaluate to its recorded
/// polarity and applications of the same function must agree on equal arguments.
pub fn replay_model(state: &SymbolicState, model: &Model) -> bool {
    let pool = &state.pool;
    for (c, holds) in state.conjuncts() {
        match pool.eval(c, model) {
            Some(v) if v.is_zero() != holds => {}
            _ => return false,
        }
    }
    let roots: Vec<ExprId> = state.conjuncts().iter().map(|c| c.0).collect();
    let mut seen: BTreeMap<(String, Vec<ruint::aliases::U256>), ruint::aliases::U256> = BTreeMap::new();
    for id in leaves(pool, &roots) {
        if let Node::Uf(name, args) = pool.node(id) {
            let Some(vals) = args.iter().map(|a| pool.eval(*a, model)).collect::<Option<Vec<_>>>() else {
                return false;
            };
            let Some(v) = model.get(&app_key(id)).copied() else { return false };
            if let Some(prev) = seen.insert((name.clone(), vals), v) {
                if prev != v {
                    return false;
                }
            }
        }
    }
    true
}
