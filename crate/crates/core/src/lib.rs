//! Adaptive join ordering with online statistics.

pub mod baselines;
pub mod catalog;
pub mod costmodel;
pub mod engine;
pub mod error;
pub mod hash;
pub mod optimizer;
pub mod plan;
pub mod planner;
pub mod query;
pub mod sketches;
pub mod value;
pub mod workload;

pub use error::{Error, Result};
pub use value::{ColumnType, Row, Schema, Value};
