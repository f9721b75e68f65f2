//! Lower k-record values from the unit-Gompertz family.
//!
//! Exact single and product moments, best linear unbiased and best linear
//! invariant estimation of location and scale, prediction of the next record,
//! pivotal intervals calibrated by simulation, and a data-analysis pipeline.

pub mod analysis;
pub mod cli;
pub mod distribution;
pub mod error;
pub mod estimation;
pub mod moments;
pub mod pivotal;
pub mod prediction;
pub mod quadrature;
pub mod records;
pub mod special;
pub mod study;

pub use error::{Error, Result};

/// Rounds half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}
