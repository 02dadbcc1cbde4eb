//! Translation validation of security-preserving compiler transformations.
//!
//! Programs are written in SecIR, properties are bundle Büchi automata that
//! accept violations, and a compiler-supplied witness relates target and
//! source product states. The checkers here validate such witnesses
//! explicitly; a brute-force oracle cross-checks verdicts on small inputs.

pub mod lex;
pub mod secir;
pub mod traceops;
pub mod automaton;
pub mod witness;
pub mod refinement;
pub mod props;
pub mod oracle;
pub mod optimizer;
pub mod smt;
pub mod report;
pub mod cli;
pub mod fixtures;

/// An explicit exploration ran past its state budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("state budget of {limit} exceeded")]
pub struct BudgetExceeded {
    pub limit: usize,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
