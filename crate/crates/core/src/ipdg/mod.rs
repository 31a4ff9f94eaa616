//! Interprocedural program dependency graph over Solidity statements.

mod build;
mod query;
mod types;

pub use build::{build_from_ast, build_ipdg, collect_facts};
pub use query::{fold, fold_constants, PathError, PATH_BUDGET};
pub use types::*;
