//! Bounded symbolic execution with SMT-backed reachability checks.

mod exec;
mod expr;
mod register;
mod solver;
mod state;
mod verify;

pub use exec::{execute_path, ExecConfig, ExecDiagnostic, ExecError, Executor, Guidance, PathOutcome, Program, DEFAULT_UNROLL};
pub use expr::{app_key, ExprId, ExprPool, Model, Node};
pub use register::{Mark, SymbolicRegister};
pub use solver::{SatResult, Session, SolverConfig, SolverError};
pub use state::{Constraint, Memory, SymbolicState};
pub use verify::*;
