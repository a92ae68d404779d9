//! Partitioned execution: scans, hash/broadcast/indexed nested-loop joins,
//! and the sink/reader pair that materializes intermediate results while
//! collecting their statistics.

mod relation;
mod spill;
mod udf;

use std::collections::{BTreeMap, HashMap};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Bound};
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{StatsConfig, TableStats};
use crate::error::{Error, Result};
use crate::query::{ColumnRef, Predicate};
use crate::value::{row_width, Row, Schema, Value};

pub use relation::{partition_of, Field, Relation};
pub use udf::{BuiltinUdf, RowPredicate, UdfFn, UdfRegistry};

/// Exact, additive work counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub tuples_scanned: u64,
    pub tuples_shuffled: u64,
    pub bytes_shuffled: u64,
    pub tuples_materialized: u64,
    pub index_lookups: u64,
    /// Output rows of every join whose result feeds another join.
    pub intermediate_tuples_total: u64,
}

impl Add for CostCounters {
    type Output = CostCounters;

    fn add(self, o: CostCounters) -> CostCounters {
        CostCounters {
            tuples_scanned: self.tuples_scanned + o.tuples_scanned,
            tuples_shuffled: self.tuples_shuffled + o.tuples_shuffled,
            bytes_shuffled: self.bytes_shuffled + o.bytes_shuffled,
            tuples_materialized: self.tuples_materialized + o.tuples_materialized,
            index_lookups: self.index_lookups + o.index_lookups,
            intermediate_tuples_total: self.intermediate_tuples_total + o.intermediate_tuples_total,
        }
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: CostCounters) {
        *self = *self + o;
    }
}

impl Sum for CostCounters {
    fn sum<I: Iterator<Item = CostCounters>>(iter: I) -> Self {
        iter.fold(CostCounters::default(), Add::add)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub partitions: usize,
    /// Directory for spill files; `None` keeps materialized results in memory.
    pub spill_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { partitions: 4, spill_dir: None }
    }
}

#[derive(Clone, Debug)]
pub struct BaseTable {
    pub schema: Schema,
    pub relation: Relation,
}

/// Per-partition sorted multimap from a column value to row positions.
#[derive(Clone, Debug)]
pub struct SecondaryIndex {
    pub dataset: String,
    pub column: String,
    partitions: Vec<BTreeMap<Value, Vec<u32>>>,
}

impl SecondaryIndex {
    pub fn lookup(&self, partition: usize, v: &Value) -> &[u32] {
        self.partitions[partition].get(v).map_or(&[], Vec::as_slice)
    }

    pub fn entries(&self) -> usize {
        self.partitions.iter().flat_map(|p| p.values()).map(Vec::len).sum()
    }
}

/// Handle to a sink output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterializedResult {
    pub name: String,
    pub fields: Vec<Field>,
    pub partitioned_on: Vec<ColumnRef>,
    pub stats: TableStats,
}

enum Stored {
    Memory(Relation),
    Spilled(spill::SpillHandle),
}

pub struct Engine {
    config: EngineConfig,
    tables: BTreeMap<String, BaseTable>,
    indexes: BTreeMap<(String, String), SecondaryIndex>,
    pub udfs: UdfRegistry,
    store: Mutex<BTreeMap<String, Stored>>,
    spill_seq: Mutex<u64>,
}

/// The physical join variant, with the broadcast input where applicable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinMode {
    Hash,
    BroadcastLeft,
    BroadcastRight,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        if config.partitions == 0 {
            return Err(Error::Config("partition count must be positive".into()));
        }
        Ok(Engine {
            config,
            tables: BTreeMap::new(),
            indexes: BTreeMap::new(),
            udfs: UdfRegistry::default(),
            store: Mutex::new(BTreeMap::new()),
            spill_seq: Mutex::new(0),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn partitions(&self) -> usize {
        self.config.partitions
    }

    /// Loads a base dataset, distributing rows by the hash of the primary key.
    pub fn load_table(&mut self, name: &str, schema: Schema, rows: Vec<Row>) -> Result<()> {
        schema.validate()?;
        for (i, row) in rows.iter().enumerate() {
            schema.check_row(row).map_err(|e| Error::Schema(format!("{name} row {}: {e}", i + 1)))?;
        }
        let fields: Vec<Field> =
            schema.columns.iter().map(|c| Field { name: c.name.clone(), origin: ColumnRef::new(name, &c.name), ty: c.ty }).collect();
        let pk = schema.primary_key_index();
        let rel = Relation { name: name.to_string(), partitions: vec![rows], fields, partitioned_on: vec![] }
            .repartition(pk, self.config.partitions);
        self.indexes.retain(|(d, _), _| d != name);
        self.tables.insert(name.to_string(), BaseTable { schema, relation: rel });
        Ok(())
    }

    pub fn table(&self, name: &str) -> Result<&BaseTable> {
        self.tables.get(name).ok_or_else(|| Error::UnknownSource(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = (&str, &BaseTable)> {
        self.tables.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn create_index(&mut self, dataset: &str, column: &str) -> Result<()> {
        let table = self.table(dataset)?;
        let col = table.schema.index_of(column).ok_or_else(|| Error::UnknownColumn {
            source_name: dataset.to_string(),
            column: column.to_string(),
            candidates: table.schema.names().collect::<Vec<_>>().join(", "),
        })?;
        let partitions = table
            .relation
            .partitions
            .iter()
            .map(|rows| {
                let mut m: BTreeMap<Value, Vec<u32>> = BTreeMap::new();
                for (i, r) in rows.iter().enumerate() {
                    m.entry(r[col].clone()).or_default().push(i as u32);
                }
                m
            })
            .collect();
        self.indexes.insert(
            (dataset.to_string(), column.to_string()),
            SecondaryIndex { dataset: dataset.to_string(), column: column.to_string(), partitions },
        );
        Ok(())
    }

    pub fn index(&self, dataset: &str, column: &str) -> Option<&SecondaryIndex> {
        self.indexes.get(&(dataset.to_string(), column.to_string()))
    }

    /// Compiles bound predicates into one row filter over `fields`.
    pub fn compile_predicates(&self, predicates: &[Predicate], fields: &[Field]) -> Result<RowPredicate> {
        let mut checks: Vec<RowPredicate> = Vec::new();
        for p in predicates {
            let column_index = |c: &ColumnRef| {
                fields.iter().position(|f| &f.origin == c || (f.origin.source == c.source && f.name == c.column)).ok_or_else(|| {
                    Error::UnknownColumn {
                        source_name: c.source.clone(),
                        column: c.column.clone(),
                        candidates: fields.iter().map(|f| f.name.clone()).collect::<Vec<_>>().join(", "),
                    }
                })
            };
            match p {
                Predicate::Equals { column, value } => {
                    let i = column_index(column)?;
                    let v = value.clone();
                    checks.push(Box::new(move |r: &Row| !r[i].is_null() && r[i] == v));
                }
                Predicate::Range { column, lo, hi } => {
                    let i = column_index(column)?;
                    let (lo, hi) = (lo.clone(), hi.clone());
                    checks.push(Box::new(move |r: &Row| {
                        let v = &r[i];
                        !v.is_null() && in_bounds(v, &lo, &hi)
                    }));
                }
                Predicate::Param { param, .. } => return Err(Error::UnboundParameter(param.clone())),
                Predicate::Udf { name, .. } => checks.push(self.udfs.bind(name, fields)?),
            }
        }
        Ok(Box::new(move |r: &Row| checks.iter().all(|c| c(r))))
    }

    /// Full scan of a base dataset applying bound predicates, then keeping
    /// the named columns (all when `keep` is `None`).
    pub fn scan_filter(&self, dataset: &str, predicates: &[Predicate], keep: Option<&[String]>) -> Result<(Relation, CostCounters)> {
        let table = self.table(dataset)?;
        let rel = &table.relation;
        let filter = self.compile_predicates(predicates, &rel.fields)?;
        let keep_idx: Vec<usize> = match keep {
            None => (0..rel.fields.len()).collect(),
            Some(cols) => cols
                .iter()
                .map(|c| {
                    rel.index_of_name(c).ok_or_else(|| Error::UnknownColumn {
                        source_name: dataset.to_string(),
                        column: c.clone(),
                        candidates: table.schema.names().collect::<Vec<_>>().join(", "),
                    })
                })
                .collect::<Result<_>>()?,
        };
        let partitions: Vec<Vec<Row>> = rel
            .partitions
            .par_iter()
            .map(|rows| rows.iter().filter(|r| filter(r)).map(|r| keep_idx.iter().map(|&i| r[i].clone()).collect()).collect())
            .collect();
        let fields: Vec<Field> = keep_idx.iter().map(|&i| rel.fields[i].clone()).collect();
        let partitioned_on = rel.partitioned_on.iter().filter(|o| fields.iter().any(|f| &f.origin == *o)).cloned().collect();
        let counters = CostCounters { tuples_scanned: rel.len(), ..Default::default() };
        Ok((Relation { name: dataset.to_string(), fields, partitions, partitioned_on }, counters))
    }

    fn check_key_types(left: &Relation, right: &Relation, keys: &[(usize, usize)]) -> Result<()> {
        if keys.is_empty() {
            return Err(Error::InvalidPlan("join without key columns".into()));
        }
        for &(l, r) in keys {
            let (fl, fr) = (&left.fields[l], &right.fields[r]);
            if fl.ty != fr.ty {
                return Err(Error::TypeMismatch(format!("join key {} ({:?}) vs {} ({:?})", fl.origin, fl.ty, fr.origin, fr.ty)));
            }
        }
        Ok(())
    }

    /// Equi-join of `left` and `right` on `keys` (field index pairs). Output
    /// rows are `left ++ right` restricted to `out`.
    pub fn join(
        &self,
        left: Relation,
        right: Relation,
        keys: &[(usize, usize)],
        mode: JoinMode,
        out: &[usize],
    ) -> Result<(Relation, CostCounters)> {
        Self::check_key_types(&left, &right, keys)?;
        let p = self.config.partitions;
        let mut counters = CostCounters::default();
        let name = format!("{}*{}", left.name, right.name);
        let fields = out_fields(&left, &right, out);
        let lk: Vec<usize> = keys.iter().map(|k| k.0).collect();
        let rk: Vec<usize> = keys.iter().map(|k| k.1).collect();
        let nl = left.fields.len();
        let (partitions, partitioned_on) = match mode {
            JoinMode::Hash => {
                let (lo, ro) = (left.fields[lk[0]].origin.clone(), right.fields[rk[0]].origin.clone());
                let mut shuffle = |rel: Relation, key: usize, origin: &ColumnRef| {
                    if rel.is_partitioned_on(origin, p) {
                        rel
                    } else {
                        counters.tuples_shuffled += rel.len();
                        counters.bytes_shuffled += rel.byte_size();
                        rel.repartition(key, p)
                    }
                };
                let left = shuffle(left, lk[0], &lo);
                let right = shuffle(right, rk[0], &ro);
                let parts = left
                    .partitions
                    .par_iter()
                    .zip(right.partitions.par_iter())
                    .map(|(lrows, rrows)| {
                        let table = build(lrows, &lk);
                        let mut outp = Vec::new();
                        for r in rrows {
                            if let Some(key) = key_of(r, &rk) {
                                for &li in table.get(&key).map_or(&[][..], Vec::as_slice) {
                                    outp.push(emit(&lrows[li], r, nl, out));
                                }
                            }
                        }
                        outp
                    })
                    .collect();
                (parts, vec![lo, ro])
            }
            JoinMode::BroadcastLeft | JoinMode::BroadcastRight => {
                let bcast_left = mode == JoinMode::BroadcastLeft;
                let (small, big, sk, bk) = if bcast_left { (&left, &right, &lk, &rk) } else { (&right, &left, &rk, &lk) };
                counters.tuples_shuffled += small.len() * p as u64;
                counters.bytes_shuffled += small.byte_size() * p as u64;
                let small_rows: Vec<&Row> = small.rows().collect();
                let mut table: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
                for (i, r) in small_rows.iter().enumerate() {
                    if let Some(k) = key_of(r, sk) {
                        table.entry(k).or_default().push(i);
                    }
                }
                let parts = big
                    .partitions
                    .par_iter()
                    .map(|rows| {
                        let mut outp = Vec::new();
                        for r in rows {
                            if let Some(key) = key_of(r, bk) {
                                for &si in table.get(&key).map_or(&[][..], Vec::as_slice) {
                                    let s = small_rows[si];
                                    outp.push(if bcast_left { emit(s, r, nl, out) } else { emit(r, s, nl, out) });
                                }
                            }
                        }
                        outp
                    })
                    .collect();
                (parts, big.partitioned_on.clone())
            }
        };
        let partitioned_on = partitioned_on.into_iter().filter(|o| fields.iter().any(|f| &f.origin == o)).collect();
        Ok((Relation { name, fields, partitions, partitioned_on }, counters))
    }

    /// Indexed nested-loop join: `bcast` is replicated to every partition of
    /// base dataset `dataset`, whose index on the first key column is probed
    /// per row. `predicates` are the dataset's local predicates, applied to
    /// fetched rows. `keys` pairs bcast field indices with dataset columns.
    /// Output rows are `left ++ right` restricted to `out`, where the
    /// dataset contributes all its columns.
    pub fn inl_join(
        &self,
        bcast: Relation,
        dataset: &str,
        keys: &[(usize, String)],
        predicates: &[Predicate],
        bcast_is_left: bool,
        out: &[usize],
    ) -> Result<(Relation, CostCounters)> {
        let table = self.tables.get(dataset).ok_or_else(|| Error::NotBaseDataset(dataset.to_string()))?;
        let Some((_, first_col)) = keys.first() else {
            return Err(Error::InvalidPlan("join without key columns".into()));
        };
        let index = self
            .index(dataset, first_col)
            .ok_or_else(|| Error::MissingIndex { dataset: dataset.to_string(), column: first_col.clone() })?;
        let base = &table.relation;
        let tkeys: Vec<(usize, usize)> = keys
            .iter()
            .map(|(b, c)| {
                base.index_of_name(c).map(|i| (*b, i)).ok_or_else(|| Error::UnknownColumn {
                    source_name: dataset.to_string(),
                    column: c.clone(),
                    candidates: table.schema.names().collect::<Vec<_>>().join(", "),
                })
            })
            .collect::<Result<_>>()?;
        let check_pairs: Vec<(usize, usize)> = if bcast_is_left { tkeys.clone() } else { tkeys.iter().map(|&(b, t)| (t, b)).collect() };
        if bcast_is_left {
            Self::check_key_types(&bcast, base, &check_pairs)?;
        } else {
            Self::check_key_types(base, &bcast, &check_pairs)?;
        }
        let filter = self.compile_predicates(predicates, &base.fields)?;
        let p = self.config.partitions;
        let b = bcast.len();
        let (fields, nl) = if bcast_is_left {
            (out_fields(&bcast, base, out), bcast.fields.len())
        } else {
            (out_fields(base, &bcast, out), base.fields.len())
        };
        let bcast_rows: Vec<&Row> = bcast.rows().collect();
        let results: Vec<(Vec<Row>, u64)> = base
            .partitions
            .par_iter()
            .enumerate()
            .map(|(pi, rows)| {
                let mut outp = Vec::new();
                let mut fetched = 0u64;
                for br in &bcast_rows {
                    let probe = &br[tkeys[0].0];
                    if probe.is_null() {
                        continue;
                    }
                    for &ri in index.lookup(pi, probe) {
                        let tr = &rows[ri as usize];
                        fetched += 1;
                        if !tkeys[1..].iter().all(|&(bi, ti)| !br[bi].is_null() && br[bi] == tr[ti]) || !filter(tr) {
                            continue;
                        }
                        outp.push(if bcast_is_left { emit(br, tr, nl, out) } else { emit(tr, br, nl, out) });
                    }
                }
                (outp, fetched)
            })
            .collect();
        let counters = CostCounters {
            tuples_scanned: results.iter().map(|r| r.1).sum(),
            tuples_shuffled: b * p as u64,
            bytes_shuffled: bcast.byte_size() * p as u64,
            index_lookups: b * p as u64,
            ..Default::default()
        };
        let partitioned_on = base.partitioned_on.iter().filter(|o| fields.iter().any(|f| &f.origin == *o)).cloned().collect();
        Ok((
            Relation {
                name: format!("{}*{dataset}", bcast.name),
                fields,
                partitions: results.into_iter().map(|r| r.0).collect(),
                partitioned_on,
            },
            counters,
        ))
    }

    /// Materializes `rel` under `name`, collecting statistics over the
    /// fields named in `track`. The row count in the returned statistics is
    /// exact.
    pub fn sink(&self, mut rel: Relation, name: &str, track: &[String], cfg: &StatsConfig) -> Result<(MaterializedResult, CostCounters)> {
        rel.name = name.to_string();
        let tracked = track
            .iter()
            .map(|c| {
                rel.index_of_name(c).map(|i| (c.clone(), i)).ok_or_else(|| Error::UnknownColumn {
                    source_name: name.to_string(),
                    column: c.clone(),
                    candidates: rel.fields.iter().map(|f| f.name.clone()).collect::<Vec<_>>().join(", "),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let stats = TableStats::collect(name, &rel.partitions, &tracked, cfg)?;
        let counters = CostCounters { tuples_materialized: stats.row_count, ..Default::default() };
        let result =
            MaterializedResult { name: name.to_string(), fields: rel.fields.clone(), partitioned_on: rel.partitioned_on.clone(), stats };
        let stored = match &self.config.spill_dir {
            None => Stored::Memory(rel),
            Some(dir) => {
                let seq = {
                    let mut s = self.spill_seq.lock().expect("spill counter poisoned");
                    *s += 1;
                    *s
                };
                Stored::Spilled(spill::write(dir, seq, &rel)?)
            }
        };
        self.store.lock().expect("store poisoned").insert(name.to_string(), stored);
        Ok((result, counters))
    }

    /// Re-streams a materialized result, partition-aligned.
    pub fn reader(&self, name: &str) -> Result<Relation> {
        let store = self.store.lock().expect("store poisoned");
        match store.get(name) {
            None => Err(Error::UnknownSource(name.to_string())),
            Some(Stored::Memory(rel)) => Ok(rel.clone()),
            Some(Stored::Spilled(h)) => spill::read(h),
        }
    }

    /// Fields of a materialized result without reading its rows.
    pub fn materialized_fields(&self, name: &str) -> Result<Vec<Field>> {
        let store = self.store.lock().expect("store poisoned");
        match store.get(name) {
            None => Err(Error::UnknownSource(name.to_string())),
            Some(Stored::Memory(rel)) => Ok(rel.fields.clone()),
            Some(Stored::Spilled(h)) => Ok(h.fields.clone()),
        }
    }

    /// Drops every materialized result and its spill files.
    pub fn clear_materialized(&self) {
        let mut store = self.store.lock().expect("store poisoned");
        for (_, s) in std::mem::take(&mut *store) {
            if let Stored::Spilled(h) = s {
                spill::remove(&h);
            }
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.clear_materialized();
    }
}

fn in_bounds(v: &Value, lo: &Bound<Value>, hi: &Bound<Value>) -> bool {
    let lo_ok = match lo {
        Bound::Included(l) => v >= l,
        Bound::Excluded(l) => v > l,
        Bound::Unbounded => true,
    };
    let hi_ok = match hi {
        Bound::Included(h) => v <= h,
        Bound::Excluded(h) => v < h,
        Bound::Unbounded => true,
    };
    lo_ok && hi_ok
}

fn key_of(row: &Row, cols: &[usize]) -> Option<Vec<Value>> {
    let mut k = Vec::with_capacity(cols.len());
    for &c in cols {
        if row[c].is_null() {
            return None;
        }
        k.push(row[c].clone());
    }
    Some(k)
}

fn build(rows: &[Row], cols: &[usize]) -> HashMap<Vec<Value>, Vec<usize>> {
    let mut m: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(k) = key_of(r, cols) {
            m.entry(k).or_default().push(i);
        }
    }
    m
}

fn emit(l: &Row, r: &Row, nl: usize, out: &[usize]) -> Row {
    out.iter().map(|&i| if i < nl { l[i].clone() } else { r[i - nl].clone() }).collect()
}

fn out_fields(left: &Relation, right: &Relation, out: &[usize]) -> Vec<Field> {
    let nl = left.fields.len();
    out.iter().map(|&i| if i < nl { left.fields[i].clone() } else { right.fields[i - nl].clone() }).collect()
}

/// Total row bytes of `rows`.
pub fn rows_bytes(rows: &[Row]) -> u64 {
    rows.iter().map(|r| row_width(r)).sum()
}

#[cfg(test)]
mod tests;
