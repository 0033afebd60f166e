//! Std companion of `tkat-core`: series CSV and config IO, sample caches,
//! checkpoints and the multi-seed benchmark harness.

pub mod binio;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod report;
pub mod series_csv;

pub use error::{BenchError, Result};
