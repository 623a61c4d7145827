//! Exact and numerical tools for counting representations by products of norm forms.

pub mod arith;
pub mod cone;
pub mod error;
pub mod field;
pub mod qmc;
pub mod units;

pub use error::{Error, Result};
pub mod congruence;
pub mod representation;
pub mod local_global;
pub mod majorant;
