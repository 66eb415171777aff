//! PathSentry core: static detection of filesystem vulnerabilities in app bundles.
//!
//! The analysis pipeline parses an app bundle (manifest + ALIR program) and an
//! access-control policy, builds a program dependence graph, runs directed
//! symbolic execution along taint flows, intersects the resulting path
//! conditions with policy-derived file constraints, and solves for concrete
//! exploit payloads. Every positive is replayed through a concrete interpreter
//! before it is reported.

pub mod constraints;
pub mod detect;
pub mod diag;
pub mod frontend;
pub mod graph;
pub mod policy;
pub mod symexec;
