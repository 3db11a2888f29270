//! Dataset files, index persistence and benchmarking.

pub mod attributes;
pub mod bench;
pub mod persist;
pub mod synth;
pub mod vecs;
