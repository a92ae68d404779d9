//! The re-optimization driver: push down local predicates, then repeatedly
//! execute the cheapest join, measure its output and rewrite the remaining
//! query, until two joins are left.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::costmodel::{CostConfig, Scoring};
use crate::engine::{CostCounters, Engine, Relation};
use crate::error::{Error, Result};
use crate::plan::{execute, execute_query, JoinRecord, PlanNode};
use crate::planner::{index_first_keys, CandidateEstimate, FilterEstimation, PlanStep, Planner};
use crate::query::{
    datasets_with_pushable_predicates, filtered_source, joined_source, make_single_source_query, substitute_source, Bindings, ColumnRef,
    DataSourceRef, Query,
};
use crate::value::Row;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub cost: CostConfig,
    /// Skip statistics collection on the materialization that precedes the
    /// final two-join step.
    pub skip_last_stats: bool,
    pub scoring: Scoring,
    pub filters: FilterEstimation,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            cost: CostConfig::default(),
            skip_last_stats: true,
            scoring: Scoring::Eq1,
            filters: FilterEstimation::Selectivity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Pushdown { dataset: String, source: String, rows: u64 },
    Reoptimization { query: String, step: PlanStep, output: String },
    Materialization { source: String, rows: u64, bytes: u64, tracked: Vec<String> },
    Final { plan: PlanNode, step: Option<PlanStep> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub events: Vec<TraceEvent>,
    pub counters: CostCounters,
    pub joins: Vec<JoinRecord>,
    /// The executed join tree over base-dataset scans.
    pub plan: PlanNode,
}

impl OptimizationTrace {
    pub fn reoptimizations(&self) -> impl Iterator<Item = &PlanStep> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Reoptimization { step, .. } => Some(step),
            _ => None,
        })
    }

    pub fn pushdowns(&self) -> impl Iterator<Item = (&str, u64)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Pushdown { dataset, rows, .. } => Some((dataset.as_str(), *rows)),
            _ => None,
        })
    }

    /// The first join the strategy executed, as a set of base datasets.
    pub fn first_join(&self) -> Option<BTreeSet<String>> {
        first_join_of(&self.plan)
    }
}

/// Base datasets under the first join executed in `plan` (the deepest,
/// leftmost join).
pub fn first_join_of(plan: &PlanNode) -> Option<BTreeSet<String>> {
    match plan {
        PlanNode::Join { left, right, .. } => {
            let l = left.depth();
            let r = right.depth();
            if l == 0 && r == 0 {
                Some(plan.datasets())
            } else if l >= r {
                first_join_of(left)
            } else {
                first_join_of(right)
            }
        }
        _ => None,
    }
}

/// Join-key columns of `source` in `q`: the attributes later join stages use.
fn join_columns(q: &Query, source: &str) -> Vec<String> {
    let mut cols = BTreeSet::new();
    for j in &q.joins {
        if j.left.source == source {
            cols.insert(j.left.column.clone());
        }
        if j.right.source == source {
            cols.insert(j.right.column.clone());
        }
    }
    cols.into_iter().collect()
}

/// Renames and orders `rel`'s fields to the columns `src` exposes.
fn conform(rel: Relation, src: &DataSourceRef) -> Result<Relation> {
    let cols = src.derived_columns();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            rel.index_of_origin(&c.origin).ok_or_else(|| Error::InvalidPlan(format!("result lacks column {} for {}", c.origin, src.name)))
        })
        .collect::<Result<_>>()?;
    let mut rel = rel.project(&idx);
    for (f, c) in rel.fields.iter_mut().zip(cols) {
        f.name = c.name.clone();
    }
    Ok(rel)
}

struct State<'a> {
    engine: &'a Engine,
    bindings: &'a Bindings,
    cfg: &'a OptimizerConfig,
    catalog: Catalog,
    /// Node that produces each current source when executed now.
    leaf: BTreeMap<String, PlanNode>,
    /// Node over base scans that each current source stands for.
    realized: BTreeMap<String, PlanNode>,
    events: Vec<TraceEvent>,
    counters: CostCounters,
    joins: Vec<JoinRecord>,
}

impl State<'_> {
    fn origin_keys(&self, q: &Query, c: &CandidateEstimate) -> Result<Vec<(ColumnRef, ColumnRef)>> {
        let (l, r) = (&q.sources[&c.edge.left], &q.sources[&c.edge.right]);
        index_first_keys(&c.edge, c.algorithm, &self.catalog)
            .iter()
            .map(|(a, b)| {
                let oa = l.origin_of(a).ok_or_else(|| Error::InvalidPlan(format!("{}.{a} unresolved", l.name)))?;
                let ob = r.origin_of(b).ok_or_else(|| Error::InvalidPlan(format!("{}.{b} unresolved", r.name)))?;
                Ok((oa, ob))
            })
            .collect()
    }

    fn join_nodes(&self, q: &Query, c: &CandidateEstimate) -> Result<(PlanNode, PlanNode)> {
        let keys = self.origin_keys(q, c)?;
        let node = |m: &BTreeMap<String, PlanNode>| {
            PlanNode::join(c.algorithm, keys.clone(), m[&c.edge.left].clone(), m[&c.edge.right].clone(), Some(c.estimate))
        };
        Ok((node(&self.leaf), node(&self.realized)))
    }

    fn pushdown(&mut self, q: Query, d: &str) -> Result<Query> {
        let sq = make_single_source_query(&q, d)?;
        let src = filtered_source(&q, d)?;
        let keep: Vec<String> = sq.projections.iter().map(|c| c.column.clone()).collect();
        let preds = q.predicates_of(d).iter().map(|p| p.bind(self.bindings)).collect::<Result<Vec<_>>>()?;
        let (rel, c) = self.engine.scan_filter(d, &preds, Some(&keep))?;
        let next = substitute_source(&q, &BTreeSet::from([d.to_string()]), src.clone())?;
        let track = join_columns(&next, &src.name);
        let (m, c2) = self.engine.sink(rel, &src.name, &track, &self.cfg.cost.stats)?;
        self.counters += c + c2;
        self.events.push(TraceEvent::Pushdown { dataset: d.to_string(), source: src.name.clone(), rows: m.stats.row_count });
        self.catalog.register_updated_stats(&src, m.stats)?;
        let scan = self.leaf.remove(d).expect("base leaf");
        self.realized.remove(d);
        self.realized.insert(src.name.clone(), scan);
        self.leaf.insert(src.name.clone(), PlanNode::Read { name: src.name.clone(), est_rows: None });
        Ok(next)
    }

    fn planner(&self) -> Planner<'_> {
        Planner::new(&self.catalog, &self.cfg.cost).with_scoring(self.cfg.scoring, self.cfg.filters)
    }

    fn step(&mut self, q: Query) -> Result<Query> {
        let step = self.planner().next_cheapest_join(&q)?;
        let chosen = step.joins[0].clone();
        let out = joined_source(&q, &chosen.edge.left, &chosen.edge.right)?;
        let (node, realized) = self.join_nodes(&q, &chosen)?;
        let needed: BTreeSet<ColumnRef> = out.derived_columns().iter().map(|c| c.origin.clone()).collect();
        let exec = execute(&node, self.engine, self.bindings, &needed)?;
        let rel = conform(exec.relation, &out)?;
        let next = substitute_source(&q, &BTreeSet::from([chosen.edge.left.clone(), chosen.edge.right.clone()]), out.clone())?;
        let last = next.edges().len() <= 2;
        let track = if last && self.cfg.skip_last_stats { Vec::new() } else { join_columns(&next, &out.name) };
        let (m, c) = self.engine.sink(rel, &out.name, &track, &self.cfg.cost.stats)?;
        self.counters += exec.counters + c;
        self.counters.intermediate_tuples_total += m.stats.row_count;
        self.joins.extend(exec.joins);
        self.events.push(TraceEvent::Reoptimization { query: q.to_string(), step, output: out.name.clone() });
        self.events.push(TraceEvent::Materialization {
            source: out.name.clone(),
            rows: m.stats.row_count,
            bytes: m.stats.byte_size,
            tracked: track,
        });
        self.catalog.register_updated_stats(&out, m.stats)?;
        for s in [&chosen.edge.left, &chosen.edge.right] {
            self.leaf.remove(s);
            self.realized.remove(s);
        }
        self.leaf.insert(out.name.clone(), PlanNode::Read { name: out.name.clone(), est_rows: Some(chosen.estimate) });
        self.realized.insert(out.name.clone(), realized);
        Ok(next)
    }

    /// Builds the final tree (execution form and base form).
    fn final_plan(&self, q: &Query) -> Result<(PlanNode, PlanNode, Option<PlanStep>)> {
        match q.edges().len() {
            0 => {
                let s = q.sources.keys().next().expect("non-empty query");
                Ok((self.leaf[s].clone(), self.realized[s].clone(), None))
            }
            1 => {
                let step = self.planner().single_join(q)?;
                let (a, b) = self.join_nodes(q, &step.joins[0])?;
                Ok((a, b, Some(step)))
            }
            2 => {
                let step = self.planner().final_two_join_plan(q)?;
                let (inner, outer) = (&step.joins[0], &step.joins[1]);
                let (inner_exec, inner_real) = self.join_nodes(q, inner)?;
                let shared = if inner.edge.touches(&outer.edge.left) { &outer.edge.left } else { &outer.edge.right };
                let other = outer.edge.other(shared).to_string();
                let keys = self.origin_keys(q, outer)?;
                let shared_left = &outer.edge.left == shared;
                let build = |inner: PlanNode, m: &BTreeMap<String, PlanNode>| {
                    let o = m[&other].clone();
                    let (l, r) = if shared_left { (inner, o) } else { (o, inner) };
                    PlanNode::join(outer.algorithm, keys.clone(), l, r, Some(outer.estimate))
                };
                let e = build(inner_exec, &self.leaf);
                let r = build(inner_real, &self.realized);
                Ok((e, r, Some(step)))
            }
            n => Err(Error::InvalidQuery(format!("final step with {n} joins"))),
        }
    }
}

/// Runs `q` with dynamic re-optimization. Statistics registered along the
/// way go to a private copy of `catalog`.
pub fn run_dynamic(
    q: &Query,
    catalog: &Catalog,
    engine: &Engine,
    cfg: &OptimizerConfig,
    bindings: &Bindings,
) -> Result<(Vec<Row>, OptimizationTrace)> {
    for p in q.parameters() {
        if !bindings.contains_key(&p) {
            return Err(Error::UnboundParameter(p));
        }
    }
    for u in q.udfs() {
        if !engine.udfs.contains(&u) {
            return Err(Error::UnknownUdf(u));
        }
    }
    let base_leaves: BTreeMap<String, PlanNode> =
        q.sources.keys().map(|d| (d.clone(), PlanNode::scan(d, q.predicates_of(d).to_vec()))).collect();
    let mut st = State {
        engine,
        bindings,
        cfg,
        catalog: catalog.clone(),
        leaf: base_leaves.clone(),
        realized: base_leaves,
        events: Vec::new(),
        counters: CostCounters::default(),
        joins: Vec::new(),
    };
    let mut cur = q.clone();
    for d in datasets_with_pushable_predicates(q) {
        cur = st.pushdown(cur, &d)?;
    }
    while cur.edges().len() > 2 {
        cur = st.step(cur)?;
    }
    let (exec_plan, realized, step) = st.final_plan(&cur)?;
    let (rows, exec) = execute_query(&cur, &exec_plan, engine, bindings)?;
    st.counters += exec.counters;
    st.joins.extend(exec.joins);
    st.events.push(TraceEvent::Final { plan: exec_plan, step });
    engine.clear_materialized();
    Ok((rows, OptimizationTrace { events: st.events, counters: st.counters, joins: st.joins, plan: realized }))
}
