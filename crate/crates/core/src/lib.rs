//! Sparse DFT recovery by subsampling, shifted delay chains and peeling.
// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod formats;
pub mod frontend;
pub mod metrics;
pub mod oracle;
pub mod peeling;
pub mod planner;
pub mod singleton;
pub mod spectral_model;

pub use error::{Error, Result};
