//! SMT-LIB session with an external solver process.

use super::expr::{app_key, smt_name, uf_name, ExprId, ExprPool, Model, Node, ZERO};
use ruint::aliases::U256;
use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),
    #[error("solver timed out on {0}")]
    SolverTimeout(String),
    #[error("solver protocol error: {0}")]
    Protocol(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub path: PathBuf,
    pub timeout: Duration,
}

impl SolverConfig {
    /// `$EQUIVGUARD_SOLVER`, else `z3` on the search path.
    pub fn discover(timeout: Duration) -> Option<SolverConfig> {
        let path = match std::env::var_os("EQUIVGUARD_SOLVER") {
            Some(p) => PathBuf::from(p),
            None => find_on_path("z3")?,
        };
        path.exists().then_some(SolverConfig { path, timeout })
    }
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let paths = std::env::var_os("PATH")?;
    std::env::split_paths(&paths).map(|d| d.join(name)).find(|p| p.is_file())
}

/// Caps the number of live solver processes.
struct Slots {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

fn slots() -> &'static Slots {
    static S: OnceLock<Slots> = OnceLock::new();
    S.get_or_init(|| Slots {
        used: Mutex::new(0),
        freed: Condvar::new(),
        limit: std::thread::available_parallelism().map_or(4, |n| n.get()),
    })
}

struct Permit;

impl Permit {
    fn acquire() -> Permit {
        let s = slots();
        let mut used = s.used.lock().unwrap();
        while *used >= s.limit {
            used = s.freed.wait(used).unwrap();
        }
        *used += 1;
        Permit
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        let s = slots();
        *s.used.lock().unwrap() -= 1;
        s.freed.notify_one();
    }
}

pub struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    defined: HashSet<ExprId>,
    declared: BTreeSet<String>,
    timeout: Duration,
    pub queries: usize,
    /// Wall time spent waiting on the solver.
    pub busy: Duration,
    _permit: Permit,
}

impl Session {
    pub fn start(cfg: &SolverConfig) -> Result<Session, SolverError> {
        Session::spawn(&cfg.path, cfg.timeout)
    }

    pub fn spawn(path: &Path, timeout: Duration) -> Result<Session, SolverError> {
        let permit = Permit::acquire();
        let mut child = Command::new(path)
            .args(["-in", "-smt2"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SolverError::SolverUnavailable(format!("{}: {e}", path.display())))?;
        let stdin = child.stdin.take().unwrap();
        let stdout = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut s = Session {
            child,
            stdin,
            lines: rx,
            defined: HashSet::new(),
            declared: BTreeSet::new(),
            timeout,
            queries: 0,
            busy: Duration::ZERO,
            _permit: permit,
        };
        s.send("(set-option :print-success false)")?;
        s.send("(set-option :produce-models true)")?;
        s.send(&format!("(set-option :timeout {})", timeout.as_millis().max(1)))?;
        s.send("(set-logic QF_UFBV)")?;
        Ok(s)
    }

    fn send(&mut self, cmd: &str) -> Result<(), SolverError> {
        writeln!(self.stdin, "{cmd}").map_err(|e| SolverError::Protocol(e.to_string()))
    }

    fn flush(&mut self) -> Result<(), SolverError> {
        self.stdin.flush().map_err(|e| SolverError::Protocol(e.to_string()))
    }

    fn recv(&mut self, what: &str) -> Result<String, SolverError> {
        let grace = self.timeout + Duration::from_secs(2);
        match self.lines.recv_timeout(grace) {
            Ok(l) => {
                if l.starts_with("(error") {
                    Err(SolverError::Protocol(l))
                } else {
                    Ok(l)
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                Err(SolverError::SolverTimeout(what.to_string()))
            }
            Err(RecvTimeoutError::Disconnected) => Err(SolverError::Protocol("solver exited".into())),
        }
    }

    /// Emits declarations and definitions for `id` and everything below it.
    pub fn define(&mut self, pool: &ExprPool, id: ExprId) -> Result<(), SolverError> {
        if self.defined.contains(&id) {
            return Ok(());
        }
        let mut order = Vec::new();
        let mut seen = BTreeSet::new();
        let defined = &self.defined;
        pool.collect(id, &mut seen, &mut |_, i| {
            if !defined.contains(&i) {
                order.push(i);
            }
        });
        for i in order {
            match pool.node(i) {
                Node::Sym(s) => {
                    if self.declared.insert(s.clone()) {
                        self.send(&format!("(declare-const {} (_ BitVec 256))", smt_name(s)))?;
                    }
                }
                Node::Uf(name, args) => {
                    let f = uf_name(name, args.len());
                    if self.declared.insert(f.clone()) {
                        let dom = vec!["(_ BitVec 256)"; args.len()].join(" ");
                        self.send(&format!("(declare-fun {f} ({dom}) (_ BitVec 256))"))?;
                    }
                }
                _ => {}
            }
            self.send(&format!("(define-fun e{i} () (_ BitVec 256) {})", pool.smt_term(i)))?;
            self.defined.insert(i);
        }
        Ok(())
    }

    fn assertion(cond: ExprId, holds: bool) -> String {
        if holds {
            format!("(assert (not (= e{cond} {ZERO})))")
        } else {
            format!("(assert (= e{cond} {ZERO}))")
        }
    }

    /// Satisfiability of the conjunction of `(word, nonzero?)` constraints.
    pub fn check(&mut self, pool: &ExprPool, conjuncts: &[(ExprId, bool)]) -> Result<SatResult, SolverError> {
        Ok(self.check_with_model(pool, conjuncts, &[])?.0)
    }

    /// Like [`Session::check`], and on sat returns values for the given terms.
    pub fn check_with_model(
        &mut self,
        pool: &ExprPool,
        conjuncts: &[(ExprId, bool)],
        want: &[ExprId],
    ) -> Result<(SatResult, Option<Model>), SolverError> {
        for (c, _) in conjuncts {
            self.define(pool, *c)?;
        }
        for w in want {
            self.define(pool, *w)?;
        }
        self.queries += 1;
        let started = std::time::Instant::now();
        let r = self.query(pool, conjuncts, want);
        self.busy += started.elapsed();
        r
    }

    fn query(
        &mut self,
        pool: &ExprPool,
        conjuncts: &[(ExprId, bool)],
        want: &[ExprId],
    ) -> Result<(SatResult, Option<Model>), SolverError> {
        self.send("(push 1)")?;
        for (c, h) in conjuncts {
            self.send(&Session::assertion(*c, *h))?;
        }
        self.send("(check-sat)")?;
        self.flush()?;
        let answer = self.recv("check-sat")?;
        let res = match answer.trim() {
            "sat" => SatResult::Sat,
            "unsat" => SatResult::Unsat,
            _ => SatResult::Unknown,
        };
        let mut model = None;
        if res == SatResult::Sat && !want.is_empty() {
            let terms: Vec<String> = want.iter().map(|w| format!("e{w}")).collect();
            self.send(&format!("(get-value ({}))", terms.join(" ")))?;
            self.flush()?;
            let mut text = String::new();
            loop {
                let l = self.recv("get-value")?;
                text.push_str(&l);
                text.push(' ');
                if balanced(&text) {
                    break;
                }
            }
            let values = parse_values(&text)?;
            let mut m = Model::new();
            for (name, v) in values {
                let id: ExprId = name
                    .strip_prefix('e')
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| SolverError::Protocol(format!("unexpected term {name}")))?;
                match pool.node(id) {
                    Node::Sym(s) => {
                        m.insert(s.clone(), v);
                    }
                    Node::Uf(..) => {
                        m.insert(app_key(id), v);
                    }
                    _ => {}
                }
            }
            model = Some(m);
        }
        self.send("(pop 1)")?;
        Ok((res, model))
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn balanced(s: &str) -> bool {
    let open = s.matches('(').count();
    open > 0 && open == s.matches(')').count()
}

/// Parses `((e1 #x..) (e2 #b..))`.
fn parse_values(s: &str) -> Result<Vec<(String, U256)>, SolverError> {
    let cleaned = s.replace(['(', ')'], " ");
    let toks: Vec<&str> = cleaned.split_whitespace().collect();
    if toks.len() % 2 != 0 {
        return Err(SolverError::Protocol(format!("malformed get-value: {s}")));
    }
    let mut out = Vec::new();
    for pair in toks.chunks(2) {
        let v = if let Some(h) = pair[1].strip_prefix("#x") {
            U256::from_str_radix(h, 16)
        } else if let Some(b) = pair[1].strip_prefix("#b") {
            U256::from_str_radix(b, 2)
        } else {
            return Err(SolverError::Protocol(format!("unexpected value {}", pair[1])));
        }
        .map_err(|e| SolverError::Protocol(e.to_string()))?;
        out.push((pair[0].to_string(), v));
    }
    Ok(out)
}
