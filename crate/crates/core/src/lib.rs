#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod correlate;
pub mod enrich;
pub mod model;
pub mod explain;
pub mod eval;
pub mod simgen;
pub mod emit;
pub mod pipeline;
pub mod error;

pub use error::{Error, Result};
