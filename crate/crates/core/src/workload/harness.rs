use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::loader::LoadedWorkload;
use super::spec::{QuerySpec, Strategy};
use crate::baselines::{best_order, ingres_like, pairwise_join_sizes, pilot_run, static_cost_based, worst_order, PilotStats};
use crate::engine::CostCounters;
use crate::error::{Error, Result};
use crate::optimizer::{run_dynamic, OptimizationTrace, OptimizerConfig, TraceEvent};
use crate::plan::{run_with_plan, JoinRecord, PlanNode};
use crate::query::Query;
use crate::value::Row;

/// Outcome of one (query, strategy) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub workload: String,
    pub query: String,
    pub strategy: Strategy,
    pub plan: PlanNode,
    pub rendered: String,
    /// Work done executing the plan, materializations included.
    pub counters: CostCounters,
    /// Work spent before execution (pilot scans, measuring join sizes).
    pub overhead: CostCounters,
    pub joins: Vec<JoinRecord>,
    pub result_rows: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<BTreeMap<String, PilotStats>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEvent>,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub workload: String,
    pub reports: Vec<StrategyReport>,
}

impl WorkloadReport {
    pub fn get(&self, query: &str, strategy: Strategy) -> Option<&StrategyReport> {
        self.reports.iter().find(|r| r.query == query && r.strategy == strategy)
    }

    /// One row per (query, strategy); identical inputs give identical bytes.
    pub fn combined_csv(&self) -> String {
        let mut s = String::from(
            "workload,query,strategy,plan,joins,result_rows,tuples_scanned,tuples_shuffled,bytes_shuffled,\
             tuples_materialized,index_lookups,intermediate_tuples_total,overhead_tuples_scanned\n",
        );
        for r in &self.reports {
            let c = &r.counters;
            let _ = writeln!(
                s,
                "{},{},{},\"{}\",{},{},{},{},{},{},{},{},{}",
                r.workload,
                r.query,
                r.strategy,
                r.rendered.replace('"', "\"\""),
                r.plan.join_count(),
                r.result_rows,
                c.tuples_scanned,
                c.tuples_shuffled,
                c.bytes_shuffled,
                c.tuples_materialized,
                c.index_lookups,
                c.intermediate_tuples_total,
                r.overhead.tuples_scanned,
            );
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("workload,query,strategy,wall_ms\n");
        for r in &self.reports {
            let _ = writeln!(s, "{},{},{},{:.3}", r.workload, r.query, r.strategy, r.wall_ms);
        }
        s
    }

    /// Writes `reports/`, `plans/`, `combined.csv` and, if asked,
    /// `timings.csv` under `dir`.
    pub fn write(&self, dir: &Path, timings: bool) -> Result<()> {
        std::fs::create_dir_all(dir.join("reports"))?;
        std::fs::create_dir_all(dir.join("plans"))?;
        for r in &self.reports {
            let stem = format!("{}__{}", r.query, r.strategy);
            std::fs::write(dir.join("reports").join(format!("{stem}.json")), serde_json::to_string_pretty(r)?)?;
            std::fs::write(dir.join("plans").join(format!("{stem}.json")), serde_json::to_string_pretty(&r.plan)?)?;
        }
        std::fs::write(dir.join("combined.csv"), self.combined_csv())?;
        if timings {
            std::fs::write(dir.join("timings.csv"), self.timings_csv())?;
        }
        Ok(())
    }
}

pub fn optimizer_config(w: &LoadedWorkload) -> OptimizerConfig {
    OptimizerConfig { cost: w.spec.config.cost.clone(), skip_last_stats: w.spec.config.skip_last_stats, ..OptimizerConfig::default() }
}

fn report(w: &LoadedWorkload, qs: &QuerySpec, strategy: Strategy, plan: PlanNode) -> StrategyReport {
    StrategyReport {
        workload: w.spec.name.clone(),
        query: qs.name.clone(),
        strategy,
        rendered: plan.render(),
        plan,
        counters: CostCounters::default(),
        overhead: CostCounters::default(),
        joins: vec![],
        result_rows: 0,
        pilot: None,
        trace: vec![],
        wall_ms: 0.0,
    }
}

fn from_trace(w: &LoadedWorkload, qs: &QuerySpec, strategy: Strategy, trace: OptimizationTrace) -> StrategyReport {
    let mut r = report(w, qs, strategy, trace.plan.clone());
    r.counters = trace.counters;
    r.joins = trace.joins;
    r.trace = trace.events;
    r
}

/// Runs one strategy. `dynamic` is the dynamic strategy's trace for the same
/// query, required by `best_order`.
pub fn run_strategy(
    w: &LoadedWorkload,
    qs: &QuerySpec,
    q: &Query,
    strategy: Strategy,
    dynamic: Option<&OptimizationTrace>,
) -> Result<(Vec<Row>, StrategyReport)> {
    let start = Instant::now();
    let cfg = optimizer_config(w);
    let b = &qs.bindings;
    let (rows, mut rep) = match strategy {
        Strategy::Dynamic => {
            let (rows, trace) = run_dynamic(q, &w.catalog, &w.engine, &cfg, b)?;
            (rows, from_trace(w, qs, strategy, trace))
        }
        Strategy::IngresLike => {
            let (rows, trace) = ingres_like(q, &w.catalog, &w.engine, &cfg, b)?;
            (rows, from_trace(w, qs, strategy, trace))
        }
        Strategy::StaticCostBased | Strategy::WorstOrder | Strategy::BestOrder | Strategy::PilotRun => {
            let mut overhead = CostCounters::default();
            let mut pilot = None;
            let plan = match strategy {
                Strategy::StaticCostBased => static_cost_based(q, &w.catalog, &cfg.cost)?,
                Strategy::WorstOrder => {
                    let sizes = pairwise_join_sizes(q, &w.engine, b)?;
                    worst_order(q, &sizes)?
                }
                Strategy::BestOrder => {
                    let trace = dynamic.ok_or_else(|| Error::Config("best_order needs the dynamic trace".into()))?;
                    best_order(trace)
                }
                _ => {
                    let (plan, counters, stats) = pilot_run(q, &w.catalog, &w.engine, &cfg.cost, &w.spec.config.pilot, b)?;
                    overhead = counters;
                    pilot = Some(stats);
                    plan
                }
            };
            let (rows, exec) = run_with_plan(q, &plan, &w.engine, b)?;
            let mut r = report(w, qs, strategy, plan);
            r.counters = exec.counters;
            r.joins = exec.joins;
            r.overhead = overhead;
            r.pilot = pilot;
            (rows, r)
        }
    };
    rep.result_rows = rows.len() as u64;
    rep.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((rows, rep))
}

fn diff_sample(a: &[Row], b: &[Row]) -> String {
    let fmt_row = |r: &Row| format!("({})", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "));
    let mut only_a = Vec::new();
    let mut only_b = Vec::new();
    let (mut i, mut j) = (0, 0);
    while (i < a.len() || j < b.len()) && only_a.len() + only_b.len() < 5 {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                only_a.push(fmt_row(x));
                i += 1;
            }
            (Some(_), Some(y)) | (None, Some(y)) => {
                only_b.push(fmt_row(y));
                j += 1;
            }
            (Some(x), None) => {
                only_a.push(fmt_row(x));
                i += 1;
            }
            (None, None) => break,
        }
    }
    format!("{} vs {} rows; only in reference: [{}]; only in other: [{}]", a.len(), b.len(), only_a.join(" "), only_b.join(" "))
}

/// Runs every query under every requested strategy, checking that all
/// strategies return the same multiset. The dynamic strategy runs first.
pub fn run_workload(w: &LoadedWorkload) -> Result<WorkloadReport> {
    let mut strategies = w.spec.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let mut out = WorkloadReport { workload: w.spec.name.clone(), reports: vec![] };
    for (qs, q) in &w.queries {
        let mut reference: Option<(Strategy, Vec<Row>)> = None;
        let mut dynamic: Option<OptimizationTrace> = None;
        if strategies.iter().any(|s| s.needs_dynamic()) && !strategies.contains(&Strategy::Dynamic) {
            let (mut rows, trace) = run_dynamic(q, &w.catalog, &w.engine, &optimizer_config(w), &qs.bindings)?;
            rows.sort();
            reference = Some((Strategy::Dynamic, rows));
            dynamic = Some(trace);
        }
        for &s in &strategies {
            let (mut rows, rep) = run_strategy(w, qs, q, s, dynamic.as_ref())?;
            rows.sort();
            if s == Strategy::Dynamic {
                dynamic = Some(OptimizationTrace {
                    events: rep.trace.clone(),
                    counters: rep.counters,
                    joins: rep.joins.clone(),
                    plan: rep.plan.clone(),
                });
            }
            match &reference {
                None => reference = Some((s, rows)),
                Some((rs, reference_rows)) => {
                    if *reference_rows != rows {
                        return Err(Error::ResultMismatch {
                            query: qs.name.clone(),
                            detail: format!("{rs} vs {s}: {}", diff_sample(reference_rows, &rows)),
                        });
                    }
                }
            }
            out.reports.push(rep);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Value;

    #[test]
    fn diff_sample_lists_both_sides() {
        let a = vec![vec![Value::Int(1)], vec![Value::Int(2)]];
        let b = vec![vec![Value::Int(2)], vec![Value::Int(3)]];
        let d = diff_sample(&a, &b);
        assert!(d.contains("only in reference: [(1)]"), "{d}");
        assert!(d.contains("only in other: [(3)]"), "{d}");
    }
}
