//! Source/sink/sanitizer taint analysis over the I-PDG.

mod cei;
mod search;
mod spec;

pub use cei::{check_cei_order, interaction_kind};
pub use search::{
    backward_slice, forward_closure, reverse_search, reverse_search_full, sinks_of, PathVerdict, SearchOutcome,
    TaintDiagnostic, TaintPath,
};
pub use spec::*;
