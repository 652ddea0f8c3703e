//! Hybrid-cloud data placement and query processing.
//!
//! Attributes are split between a private cloud and a public one; sensitive
//! public attributes are stored encrypted alongside a bucket identifier so
//! the public cloud can still filter and join on them coarsely. Queries are
//! split into per-cloud sub-plans whose results are decrypted, re-filtered
//! and combined privately.

pub mod bucketize;
pub mod catalog;
pub mod costmodel;
pub mod crypto;
pub mod engine;
pub mod error;
pub mod partitioner;
pub mod queryir;
pub mod report;
pub mod value;
pub mod workload;

pub use error::{Error, Result};
