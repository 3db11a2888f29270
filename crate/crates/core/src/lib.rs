//! Attribute-fused approximate nearest neighbor search.

// Negated comparisons are used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod hybrid;
pub mod io;
pub mod metric;
pub mod multi;
pub mod range;
pub mod record;
pub mod stats;

pub use error::{Error, Result};
