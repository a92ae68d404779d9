use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{enumerate_best_plan, join_columns, CardinalityModel, DatasetModel};
use crate::catalog::{Catalog, ColumnStatsBuilder};
use crate::costmodel::CostConfig;
use crate::engine::{CostCounters, Engine};
use crate::error::{Error, Result};
use crate::plan::PlanNode;
use crate::query::{Bindings, Query};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub sample_rate: f64,
    /// Stop a dataset's pilot scan after this many qualifying rows.
    pub limit: Option<u64>,
    pub seed: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig { sample_rate: 0.01, limit: Some(1000), seed: 0x5a3c_91e7 }
    }
}

/// What one pilot scan learned about a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotStats {
    pub examined: u64,
    pub sampled_output: u64,
    pub est_rows: f64,
    /// Sample distinct counts per join column, not scaled up.
    pub distinct: BTreeMap<String, f64>,
}

/// Runs the select-project pilot query of every dataset of `q` over a
/// hash sample of its primary key.
pub fn pilot_statistics(
    q: &Query,
    engine: &Engine,
    cost: &CostConfig,
    pilot: &PilotConfig,
    bindings: &Bindings,
) -> Result<(BTreeMap<String, PilotStats>, CostCounters)> {
    if !(pilot.sample_rate > 0.0 && pilot.sample_rate <= 1.0) {
        return Err(Error::Config(format!("sample rate {} outside (0,1]", pilot.sample_rate)));
    }
    let threshold = if pilot.sample_rate >= 1.0 { u64::MAX } else { (pilot.sample_rate * u64::MAX as f64) as u64 };
    let mut out = BTreeMap::new();
    let mut counters = CostCounters::default();
    for d in q.sources.keys() {
        let table = engine.table(d)?;
        let rel = &table.relation;
        let pk = table.schema.primary_key_index();
        let preds = q.predicates_of(d).iter().map(|p| p.bind(bindings)).collect::<Result<Vec<_>>>()?;
        let filter = engine.compile_predicates(&preds, &rel.fields)?;
        let cols: Vec<(String, usize)> = join_columns(q, d)
            .into_iter()
            .map(|c| {
                let i = rel.index_of_name(&c).expect("join column exists");
                (c, i)
            })
            .collect();
        let mut builders = cols.iter().map(|_| ColumnStatsBuilder::new(&cost.stats)).collect::<Result<Vec<_>>>()?;
        let mut examined = 0u64;
        let mut produced = 0u64;
        'scan: for part in &rel.partitions {
            for row in part {
                if pilot.limit.is_some_and(|l| produced >= l) {
                    break 'scan;
                }
                examined += 1;
                if row[pk].hash64(pilot.seed) > threshold || !filter(row) {
                    continue;
                }
                produced += 1;
                for (b, (_, i)) in builders.iter_mut().zip(&cols) {
                    b.push(&row[*i]);
                }
            }
        }
        counters.tuples_scanned += examined;
        let total = rel.len();
        let fraction = if total == 0 { 1.0 } else { examined as f64 / total as f64 };
        let est = if produced == 0 { 0.0 } else { (produced as f64 / (pilot.sample_rate * fraction)).min(total as f64) };
        let distinct = cols.iter().zip(builders).map(|((c, _), b)| (c.clone(), b.finish().distinct())).collect();
        out.insert(d.clone(), PilotStats { examined, sampled_output: produced, est_rows: est, distinct });
    }
    Ok((out, counters))
}

/// Static enumeration over pilot-run statistics. Returns the plan, the
/// pilot scans' counters, and the per-dataset pilot estimates.
pub fn pilot_run(
    q: &Query,
    catalog: &Catalog,
    engine: &Engine,
    cost: &CostConfig,
    pilot: &PilotConfig,
    bindings: &Bindings,
) -> Result<(PlanNode, CostCounters, BTreeMap<String, PilotStats>)> {
    let (stats, counters) = pilot_statistics(q, engine, cost, pilot, bindings)?;
    let view = catalog.base_view();
    let mut datasets = BTreeMap::new();
    for (d, s) in &stats {
        datasets.insert(
            d.clone(),
            DatasetModel {
                rows: s.est_rows,
                row_width: view.lookup_table(d)?.row_width(),
                filtered: !q.predicates_of(d).is_empty(),
                distinct: s.distinct.clone(),
                indexed: join_columns(q, d).into_iter().filter(|c| catalog.has_index(d, c)).collect(),
            },
        );
    }
    let model = CardinalityModel { datasets };
    let plan = enumerate_best_plan(q, &model, cost, catalog)?;
    Ok((plan, counters, stats))
}
