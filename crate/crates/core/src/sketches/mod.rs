//! Mergeable streaming summaries: GK quantiles and HyperLogLog.

pub mod codec;
pub mod gk;
pub mod histogram;
pub mod hll;

pub use gk::{GkSketch, GkTuple};
pub use histogram::Histogram;
pub use hll::HllSketch;
