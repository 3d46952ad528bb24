//! Proportional-increment processes, Bessel(3) paths, Williams' path
//! decomposition and last-hitting-time laws, with the Monte Carlo machinery
//! to check them.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod paths;
mod refine;
pub mod pi;
pub mod report;
pub mod stats;
pub mod williams;

pub use error::{Error, Result};

/// Crate version, embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
