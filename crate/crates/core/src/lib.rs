#![no_std]
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attention;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod gradsuite;
pub mod graph;
pub mod kan;
mod kernels;
pub mod model;
pub mod models;
pub mod params;
pub mod recurrent;
pub mod spline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

/// Crate version recorded in benchmark manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
