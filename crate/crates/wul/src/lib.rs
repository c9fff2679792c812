//! Proof synthesis for unrealizability triples over regular tree grammars:
//! syntax-directed proof skeletons, parametrized verification conditions,
//! solver-backed discharge, and summary/invariant synthesis.

pub mod bench;
pub mod cli;
pub mod gimp;
pub mod logic;
pub mod oracle;
pub mod sexp;
pub mod vcgen;
pub mod skeleton;
pub mod solver;
pub mod store;
pub mod synth;
