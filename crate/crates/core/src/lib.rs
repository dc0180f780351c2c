//! Mining, task synthesis and evaluation for API-evolution coding benchmarks.

pub mod cli;
pub mod doc_diff;
pub mod eval;
pub mod fuse;
pub mod lexer;
pub mod model;
pub mod program;
pub mod rag;
pub mod release_notes;
pub mod sandbox;
pub mod source;
pub mod synth;
pub mod taskgen;
pub mod usage;
