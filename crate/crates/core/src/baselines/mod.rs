//! Comparison strategies that fix the whole plan up front, or rank joins
//! by simpler statistics.

mod pilot;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::costmodel::{choose_algorithm, estimate_conjunction, CostConfig, JoinAlgorithm, Scoring, SideInfo};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::optimizer::{run_dynamic, OptimizationTrace, OptimizerConfig};
use crate::plan::PlanNode;
use crate::planner::FilterEstimation;
use crate::query::{Bindings, ColumnRef, Query};
use crate::value::{Row, Value};

pub use pilot::{pilot_run, pilot_statistics, PilotConfig, PilotStats};

/// Largest query the exhaustive enumerator accepts.
pub const MAX_DATASETS: usize = 12;

/// Per-dataset inputs of the static enumerator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetModel {
    pub rows: f64,
    pub row_width: f64,
    pub filtered: bool,
    /// Distinct count per join column.
    pub distinct: BTreeMap<String, f64>,
    pub indexed: Vec<String>,
}

/// Estimates for every base dataset of a query. The estimated size of any
/// set of joined datasets is the product of their sizes times one
/// `1/max(U_l, U_r)` factor per join edge inside the set, so it does not
/// depend on the join order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalityModel {
    pub datasets: BTreeMap<String, DatasetModel>,
}

impl CardinalityModel {
    /// Load-time statistics, with local predicates folded in as estimated
    /// selectivities (defaults for parameterized and UDF predicates).
    pub fn from_catalog(q: &Query, catalog: &Catalog, cfg: &CostConfig) -> Result<Self> {
        let view = catalog.base_view();
        let mut datasets = BTreeMap::new();
        for (d, src) in &q.sources {
            if !src.is_base() {
                return Err(Error::NotBaseDataset(d.clone()));
            }
            let table = view.lookup_table(d)?;
            let preds = q.predicates_of(d);
            let sel = estimate_conjunction(preds.iter().map(|p| (p.column().and_then(|c| table.columns.get(&c.column)), p)), cfg);
            let mut distinct = BTreeMap::new();
            for c in join_columns(q, d) {
                distinct.insert(c.clone(), view.lookup(d, &c)?.distinct());
            }
            datasets.insert(
                d.clone(),
                DatasetModel {
                    rows: table.row_count as f64 * sel,
                    row_width: table.row_width(),
                    filtered: !preds.is_empty(),
                    indexed: join_columns(q, d).into_iter().filter(|c| catalog.has_index(d, c)).collect(),
                    distinct,
                },
            );
        }
        Ok(CardinalityModel { datasets })
    }

    fn side_distinct(&self, d: &str, cols: &[&str]) -> f64 {
        let m = &self.datasets[d];
        let u: f64 = cols.iter().map(|c| m.distinct.get(*c).copied().unwrap_or(m.rows)).product();
        let u = u.min(m.rows);
        if m.rows > 0.0 {
            u.max(1.0)
        } else {
            u
        }
    }

    /// Estimated output size of joining exactly `datasets`.
    pub fn rows_of(&self, q: &Query, datasets: &[&str]) -> f64 {
        let mut rows: f64 = datasets.iter().map(|d| self.datasets[*d].rows).product();
        for e in q.edges() {
            if datasets.contains(&e.left.as_str()) && datasets.contains(&e.right.as_str()) {
                let ul = self.side_distinct(&e.left, &e.columns_of(&e.left));
                let ur = self.side_distinct(&e.right, &e.columns_of(&e.right));
                let u = ul.max(ur);
                rows = if rows == 0.0 || u == 0.0 { 0.0 } else { rows / u };
            }
        }
        rows
    }

    /// Sum of the estimated outputs of every join in `plan`.
    pub fn estimate_tree(&self, q: &Query, plan: &PlanNode) -> f64 {
        let mut total = 0.0;
        plan.visit(&mut |n| {
            if let PlanNode::Join { .. } = n {
                let ds = n.datasets();
                let names: Vec<&str> = ds.iter().map(String::as_str).collect();
                total += self.rows_of(q, &names);
            }
        });
        total
    }
}

fn join_columns(q: &Query, d: &str) -> Vec<String> {
    let mut cols: Vec<String> =
        q.joins.iter().flat_map(|j| [&j.left, &j.right]).filter(|c| c.source == d).map(|c| c.column.clone()).collect();
    cols.sort();
    cols.dedup();
    cols
}

/// Exhaustive enumeration over connected subsets (bushy trees allowed),
/// minimizing the summed estimated output of all joins.
pub fn enumerate_best_plan(q: &Query, model: &CardinalityModel, cfg: &CostConfig, catalog: &Catalog) -> Result<PlanNode> {
    let names: Vec<&str> = q.sources.keys().map(String::as_str).collect();
    let n = names.len();
    if n > MAX_DATASETS {
        return Err(Error::TooManyDatasets { max: MAX_DATASETS, found: n });
    }
    let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut adj = vec![0usize; n];
    for j in &q.joins {
        let (a, b) = (pos[j.left.source.as_str()], pos[j.right.source.as_str()]);
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }
    let connected = |s: usize| {
        let start = s & s.wrapping_neg();
        let mut seen = start;
        let mut frontier = start;
        while frontier != 0 {
            let mut next = 0;
            for (i, a) in adj.iter().enumerate() {
                if frontier & (1 << i) != 0 {
                    next |= a & s;
                }
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen == s
    };
    let members = |s: usize| -> Vec<&str> { (0..n).filter(|i| s & (1 << i) != 0).map(|i| names[i]).collect() };
    let full = (1usize << n) - 1;
    let mut rows = vec![0.0; full + 1];
    let mut best: Vec<Option<(f64, PlanNode)>> = vec![None; full + 1];
    for (i, d) in names.iter().enumerate() {
        rows[1 << i] = model.datasets[*d].rows;
        best[1 << i] = Some((
            0.0,
            PlanNode::Scan { dataset: d.to_string(), predicates: q.predicates_of(d).to_vec(), est_rows: Some(model.datasets[*d].rows) },
        ));
    }
    let mut order: Vec<usize> = (1..=full).filter(|s| s.count_ones() > 1).collect();
    order.sort_by_key(|s| (s.count_ones(), *s));
    for s in order {
        if !connected(s) {
            continue;
        }
        rows[s] = model.rows_of(q, &members(s));
        let low = s & s.wrapping_neg();
        let mut sub = (s - 1) & s;
        let mut choice: Option<(f64, usize)> = None;
        while sub > 0 {
            let other = s & !sub;
            if sub & low != 0 && other != 0 {
                if let (Some((c1, _)), Some((c2, _))) = (&best[sub], &best[other]) {
                    let crosses = (0..n).any(|i| sub & (1 << i) != 0 && adj[i] & other != 0);
                    if crosses {
                        let cost = c1 + c2 + rows[s];
                        if choice.is_none_or(|(c, _)| cost < c) {
                            choice = Some((cost, sub));
                        }
                    }
                }
            }
            sub = (sub - 1) & s;
        }
        if let Some((cost, sub)) = choice {
            let other = s & !sub;
            let (in_l, in_r) = (members(sub), members(other));
            let keys: Vec<(ColumnRef, ColumnRef)> = q
                .joins
                .iter()
                .filter_map(|j| {
                    let (ls, rs) = (j.left.source.as_str(), j.right.source.as_str());
                    if in_l.contains(&ls) && in_r.contains(&rs) {
                        Some((j.left.clone(), j.right.clone()))
                    } else if in_r.contains(&ls) && in_l.contains(&rs) {
                        Some((j.right.clone(), j.left.clone()))
                    } else {
                        None
                    }
                })
                .collect();
            let info = |set: usize, ds: &[&str], own: &[&ColumnRef]| {
                let single = ds.len() == 1;
                SideInfo {
                    name: ds.join("+"),
                    is_base: single,
                    filtered: ds.iter().any(|d| model.datasets[*d].filtered),
                    est_rows: rows[set],
                    est_bytes: rows[set] * ds.iter().map(|d| model.datasets[*d].row_width).sum::<f64>(),
                    indexed_on_key: single && own.iter().any(|c| catalog.has_index(&c.source, &c.column)),
                }
            };
            let lkeys: Vec<&ColumnRef> = keys.iter().map(|k| &k.0).collect();
            let rkeys: Vec<&ColumnRef> = keys.iter().map(|k| &k.1).collect();
            let algorithm = choose_algorithm(&info(sub, &in_l, &lkeys), &info(other, &in_r, &rkeys), cfg);
            let l = best[sub].as_ref().expect("sub plan").1.clone();
            let r = best[other].as_ref().expect("sub plan").1.clone();
            best[s] = Some((cost, PlanNode::join(algorithm, keys, l, r, Some(rows[s]))));
        }
    }
    best[full].take().map(|(_, p)| p).ok_or_else(|| Error::Disconnected(q.components()))
}

/// Full plan from load-time statistics with default selectivities for
/// predicates whose values are unknown at planning time.
pub fn static_cost_based(q: &Query, catalog: &Catalog, cfg: &CostConfig) -> Result<PlanNode> {
    let model = CardinalityModel::from_catalog(q, catalog, cfg)?;
    enumerate_best_plan(q, &model, cfg, catalog)
}

/// Exact output size of every join edge of `q` taken in isolation, after
/// each side's local predicates. Keyed by edge name.
pub fn pairwise_join_sizes(q: &Query, engine: &Engine, bindings: &Bindings) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for e in q.edges() {
        let side = |d: &str, cols: Vec<&str>| -> Result<Vec<Row>> {
            let preds = q.predicates_of(d).iter().map(|p| p.bind(bindings)).collect::<Result<Vec<_>>>()?;
            let keep: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
            Ok(engine.scan_filter(d, &preds, Some(&keep))?.0.into_rows())
        };
        let l = side(&e.left, e.columns_of(&e.left))?;
        let r = side(&e.right, e.columns_of(&e.right))?;
        let mut counts: HashMap<&[Value], u64> = HashMap::new();
        for row in &l {
            if row.iter().all(|v| !v.is_null()) {
                *counts.entry(row.as_slice()).or_default() += 1;
            }
        }
        let size = r.iter().map(|row| counts.get(row.as_slice()).copied().unwrap_or(0)).sum();
        out.insert(e.name(), size);
    }
    Ok(out)
}

/// Right-deep hash-join tree scheduling joins in decreasing order of their
/// measured sizes.
pub fn worst_order(q: &Query, sizes: &BTreeMap<String, u64>) -> Result<PlanNode> {
    let edges = q.edges();
    let scan = |d: &str| PlanNode::scan(d, q.predicates_of(d).to_vec());
    if edges.is_empty() {
        let d = q.sources.keys().next().ok_or_else(|| Error::InvalidQuery("no sources".into()))?;
        return Ok(scan(d));
    }
    let size = |name: &str| -> Result<u64> {
        sizes.get(name).copied().ok_or_else(|| Error::InvalidPlan(format!("no measured size for join {name}")))
    };
    let mut ranked = edges.iter().map(|e| Ok((size(&e.name())?, e))).collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.name().cmp(&b.1.name())));
    let (_, first) = ranked[0];
    let mut included = vec![first.left.clone(), first.right.clone()];
    let keys = |new: &str, included: &[String]| -> Vec<(ColumnRef, ColumnRef)> {
        q.joins
            .iter()
            .filter_map(|j| {
                if j.left.source == new && included.contains(&j.right.source) {
                    Some((j.left.clone(), j.right.clone()))
                } else if j.right.source == new && included.contains(&j.left.source) {
                    Some((j.right.clone(), j.left.clone()))
                } else {
                    None
                }
            })
            .collect()
    };
    let mut plan = PlanNode::join(
        JoinAlgorithm::Hash,
        keys(&first.left, &included[1..]),
        scan(&first.left),
        scan(&first.right),
        Some(size(&first.name())? as f64),
    );
    while included.len() < q.sources.len() {
        let next = ranked
            .iter()
            .find(|(_, e)| included.contains(&e.left) != included.contains(&e.right))
            .ok_or_else(|| Error::Disconnected(q.components()))?;
        let new = if included.contains(&next.1.left) { next.1.right.clone() } else { next.1.left.clone() };
        let k = keys(&new, &included);
        plan = PlanNode::join(JoinAlgorithm::Hash, k, scan(&new), plan, Some(next.0 as f64));
        included.push(new);
    }
    Ok(plan)
}

/// The dynamic strategy's own tree and algorithms, run in one go.
pub fn best_order(trace: &OptimizationTrace) -> PlanNode {
    trace.plan.clone()
}

/// The re-optimization loop ranking joins by the product of input row
/// counts, with unexecuted filters ignored.
pub fn ingres_like(
    q: &Query,
    catalog: &Catalog,
    engine: &Engine,
    cfg: &OptimizerConfig,
    bindings: &Bindings,
) -> Result<(Vec<Row>, OptimizationTrace)> {
    let cfg = OptimizerConfig { scoring: Scoring::RowProduct, filters: FilterEstimation::BaseCardinality, ..cfg.clone() };
    run_dynamic(q, catalog, engine, &cfg, bindings)
}
