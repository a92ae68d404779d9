//! Python bindings. Every function takes and returns plain strings and
//! numbers: workloads and reports cross the boundary as JSON or CSV text.

use adaptjoin::optimizer::run_dynamic;
use adaptjoin::sketches::{GkSketch, HllSketch};
use adaptjoin::workload::harness::optimizer_config;
use adaptjoin::workload::{builtin, load_workload, run_strategy, run_workload, Strategy, WorkloadSpec, BUILTIN_NAMES};
use adaptjoin::{Error, Result, Value};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>> {
    names.iter().map(|n| n.parse()).collect()
}

pub fn builtin_spec(name: &str, sf: f64, seed: u64, strategies: &[String]) -> Result<String> {
    let mut spec = builtin(name, sf, seed)?;
    if !strategies.is_empty() {
        spec.strategies = parse_strategies(strategies)?;
    }
    spec.to_json()
}

pub fn run_spec_csv(spec_json: &str) -> Result<String> {
    let spec = WorkloadSpec::from_json(spec_json)?;
    Ok(run_workload(&load_workload(&spec)?)?.combined_csv())
}

pub fn explain_spec(spec_json: &str, strategy: &str) -> Result<String> {
    let strategy: Strategy = strategy.parse()?;
    let w = load_workload(&WorkloadSpec::from_json(spec_json)?)?;
    let (qs, q) = w.queries.first().ok_or_else(|| Error::Config("workload has no queries".into()))?;
    let trace =
        if strategy.needs_dynamic() { Some(run_dynamic(q, &w.catalog, &w.engine, &optimizer_config(&w), &qs.bindings)?.1) } else { None };
    Ok(run_strategy(&w, qs, q, strategy, trace.as_ref())?.1.rendered)
}

pub fn quantiles(values: &[i64], eps: f64, phis: &[f64]) -> Result<Vec<i64>> {
    let mut s = GkSketch::new(eps)?;
    for &v in values {
        s.insert(Value::Int(v));
    }
    phis.iter().map(|&p| Ok(s.quantile(p)?.as_int().unwrap_or_default())).collect()
}

pub fn distinct(values: &[i64], precision: u8) -> Result<f64> {
    let mut h = HllSketch::new(precision)?;
    for &v in values {
        h.insert(&Value::Int(v));
    }
    Ok(h.estimate())
}

/// Names of the built-in workloads.
#[pyfunction]
fn builtin_names() -> Vec<&'static str> {
    BUILTIN_NAMES.to_vec()
}

/// JSON text of a built-in workload, optionally restricted to some strategies.
#[pyfunction]
#[pyo3(signature = (name, sf = 0.01, seed = 42, strategies = vec![]))]
fn workload_json(name: &str, sf: f64, seed: u64, strategies: Vec<String>) -> PyResult<String> {
    builtin_spec(name, sf, seed, &strategies).map_err(py_err)
}

/// Runs a workload given as JSON and returns the combined CSV report.
#[pyfunction]
fn run(py: Python<'_>, spec_json: &str) -> PyResult<String> {
    py.detach(|| run_spec_csv(spec_json)).map_err(py_err)
}

/// Rendered plan of the workload's first query under `strategy`.
#[pyfunction]
#[pyo3(signature = (spec_json, strategy = "dynamic"))]
fn explain(py: Python<'_>, spec_json: &str, strategy: &str) -> PyResult<String> {
    py.detach(|| explain_spec(spec_json, strategy)).map_err(py_err)
}

/// Approximate quantiles of `values` from a GK sketch.
#[pyfunction]
#[pyo3(signature = (values, phis, eps = 0.01))]
fn gk_quantiles(values: Vec<i64>, phis: Vec<f64>, eps: f64) -> PyResult<Vec<i64>> {
    quantiles(&values, eps, &phis).map_err(py_err)
}

/// HyperLogLog distinct-count estimate of `values`.
#[pyfunction]
#[pyo3(signature = (values, precision = 14))]
fn hll_distinct(values: Vec<i64>, precision: u8) -> PyResult<f64> {
    distinct(&values, precision).map_err(py_err)
}

#[pymodule]
fn pyadaptjoin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(builtin_names, m)?)?;
    m.add_function(wrap_pyfunction!(workload_json, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(gk_quantiles, m)?)?;
    m.add_function(wrap_pyfunction!(hll_distinct, m)?)?;
    Ok(())
}
