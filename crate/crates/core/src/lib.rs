//! Detection of EVM-inequivalent code smells in Solidity contracts.

pub mod artifact;
pub mod detect;
pub mod evm;
pub mod ipdg;
pub mod report;
pub mod symexec;
pub mod taint;
mod smell;

pub use smell::Smell;
