//! Constraint solving: lexical path canonicalization, satisfiability of path
//! conditions against file-constraint goals, and SMT-LIB emission for
//! external cross-checking.

pub mod canonical;
pub mod smtlib;
pub mod solve;

pub use canonical::{canonicalize, is_path_under, CanonicalPath};
pub use smtlib::{emit_smtlib, SmtEmitError};
pub use solve::{solve, Goal, Payload, SolveOutcome};
