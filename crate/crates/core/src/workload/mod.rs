//! Experiment plumbing: data generators, workload files, loading and the
//! strategy comparison harness.

pub mod builtin;
pub mod generator;
pub mod harness;
pub mod loader;
pub mod spec;

pub use builtin::{builtin, builtin_names, BUILTIN_NAMES};
pub use generator::{generate, Family, GeneratedTable, GeneratorSpec};
pub use harness::{run_strategy, run_workload, StrategyReport, WorkloadReport};
pub use loader::{load_workload, read_csv, write_csv, LoadedWorkload};
pub use spec::{CsvDataset, DataSpec, IndexSpec, QuerySpec, RunConfig, Strategy, WorkloadSpec};
