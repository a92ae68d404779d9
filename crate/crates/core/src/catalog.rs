//! Statistics store: row counts, per-column sketches, secondary-index
//! registry, and shadowed statistics for filtered and intermediate sources.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::DataSourceRef;
use crate::sketches::codec::{Decoder, Encoder, FORMAT_VERSION};
use crate::sketches::{GkSketch, Histogram, HllSketch};
use crate::value::{row_width, Row, Schema, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub epsilon: f64,
    pub hll_precision: u8,
    pub buckets: usize,
    /// Also keep exact distinct counts; used to inject exact statistics.
    #[serde(default)]
    pub exact_distinct: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { epsilon: 0.01, hll_precision: 14, buckets: 100, exact_distinct: false }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        GkSketch::new(self.epsilon)?;
        HllSketch::new(self.hll_precision)?;
        if self.buckets == 0 {
            return Err(Error::Config("bucket count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub gk: GkSketch,
    pub hll: HllSketch,
    pub exact_distinct: Option<u64>,
}

impl ColumnStats {
    /// U(x.k): exact when known, the HLL estimate otherwise.
    pub fn distinct(&self) -> f64 {
        match self.exact_distinct {
            Some(n) => n as f64,
            None => self.hll.estimate(),
        }
    }

    /// Equi-height histogram derived from the current quantile sketch.
    pub fn histogram(&self, buckets: usize) -> Result<Histogram> {
        Histogram::from_sketch(&self.gk, buckets)
    }

    /// Number of non-null values summarized.
    pub fn count(&self) -> u64 {
        self.gk.count()
    }
}

/// Accumulates one column's sketches; nulls are not summarized.
#[derive(Clone, Debug)]
pub struct ColumnStatsBuilder {
    gk: GkSketch,
    hll: HllSketch,
    exact: Option<HashSet<Value>>,
}

impl ColumnStatsBuilder {
    pub fn new(cfg: &StatsConfig) -> Result<Self> {
        Ok(ColumnStatsBuilder {
            gk: GkSketch::new(cfg.epsilon)?,
            hll: HllSketch::new(cfg.hll_precision)?,
            exact: cfg.exact_distinct.then(HashSet::new),
        })
    }

    pub fn push(&mut self, v: &Value) {
        if v.is_null() {
            return;
        }
        self.hll.insert(v);
        if let Some(set) = &mut self.exact {
            set.insert(v.clone());
        }
        self.gk.insert(v.clone());
    }

    pub fn merge(self, other: ColumnStatsBuilder) -> Result<Self> {
        let exact = match (self.exact, other.exact) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        Ok(ColumnStatsBuilder { gk: self.gk.merge(&other.gk)?, hll: self.hll.merge(&other.hll)?, exact })
    }

    pub fn finish(self) -> ColumnStats {
        ColumnStats { gk: self.gk, hll: self.hll, exact_distinct: self.exact.map(|s| s.len() as u64) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub dataset: String,
    pub row_count: u64,
    pub byte_size: u64,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl TableStats {
    pub fn empty(dataset: impl Into<String>) -> Self {
        TableStats { dataset: dataset.into(), row_count: 0, byte_size: 0, columns: BTreeMap::new() }
    }

    /// Average logical row width in bytes.
    pub fn row_width(&self) -> f64 {
        if self.row_count == 0 {
            0.0
        } else {
            self.byte_size as f64 / self.row_count as f64
        }
    }

    /// Collects statistics partition by partition and merges the partial
    /// sketches. `tracked` lists `(column name, field index)` pairs.
    pub fn collect(dataset: &str, partitions: &[Vec<Row>], tracked: &[(String, usize)], cfg: &StatsConfig) -> Result<TableStats> {
        let partial = partitions
            .par_iter()
            .map(|rows| -> Result<(u64, u64, Vec<ColumnStatsBuilder>)> {
                let mut builders = tracked.iter().map(|_| ColumnStatsBuilder::new(cfg)).collect::<Result<Vec<_>>>()?;
                let mut bytes = 0;
                for row in rows {
                    bytes += row_width(row);
                    for (b, (_, idx)) in builders.iter_mut().zip(tracked) {
                        b.push(&row[*idx]);
                    }
                }
                Ok((rows.len() as u64, bytes, builders))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut row_count = 0;
        let mut byte_size = 0;
        let mut merged: Option<Vec<ColumnStatsBuilder>> = None;
        for (n, b, builders) in partial {
            row_count += n;
            byte_size += b;
            merged = Some(match merged {
                None => builders,
                Some(acc) => acc.into_iter().zip(builders).map(|(a, b)| a.merge(b)).collect::<Result<Vec<_>>>()?,
            });
        }
        let merged = match merged {
            Some(m) => m,
            None => tracked.iter().map(|_| ColumnStatsBuilder::new(cfg)).collect::<Result<Vec<_>>>()?,
        };
        Ok(TableStats {
            dataset: dataset.to_string(),
            row_count,
            byte_size,
            columns: tracked.iter().map(|(name, _)| name.clone()).zip(merged.into_iter().map(ColumnStatsBuilder::finish)).collect(),
        })
    }
}

/// Load-time statistics over every column in `tracked`, or all columns when
/// `tracked` is `None`.
pub fn stats_on_load(
    dataset: &str,
    schema: &Schema,
    partitions: &[Vec<Row>],
    tracked: Option<&[String]>,
    cfg: &StatsConfig,
) -> Result<TableStats> {
    for rows in partitions {
        for row in rows {
            schema.check_row(row)?;
        }
    }
    let columns: Vec<(String, usize)> = match tracked {
        None => schema.names().enumerate().map(|(i, n)| (n.to_string(), i)).collect(),
        Some(cols) => cols
            .iter()
            .map(|c| {
                schema.index_of(c).map(|i| (c.clone(), i)).ok_or_else(|| Error::UnknownColumn {
                    source_name: dataset.to_string(),
                    column: c.clone(),
                    candidates: schema.names().collect::<Vec<_>>().join(", "),
                })
            })
            .collect::<Result<_>>()?,
    };
    TableStats::collect(dataset, partitions, &columns, cfg)
}

/// Read-only view over the statistics gathered at load time.
#[derive(Clone, Copy)]
pub struct BaseView<'a> {
    catalog: &'a Catalog,
}

impl<'a> BaseView<'a> {
    pub fn lookup_table(&self, dataset: &str) -> Result<&'a TableStats> {
        self.catalog.base.get(dataset).ok_or_else(|| Error::UnknownSource(dataset.to_string()))
    }

    pub fn lookup(&self, dataset: &str, column: &str) -> Result<&'a ColumnStats> {
        column_of(self.lookup_table(dataset)?, column)
    }
}

fn column_of<'a>(t: &'a TableStats, column: &str) -> Result<&'a ColumnStats> {
    t.columns.get(column).ok_or_else(|| Error::UnknownColumn {
        source_name: t.dataset.clone(),
        column: column.to_string(),
        candidates: t.columns.keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub config: StatsConfig,
    schemas: BTreeMap<String, Schema>,
    base: BTreeMap<String, TableStats>,
    shadow: BTreeMap<String, TableStats>,
    refs: BTreeMap<String, DataSourceRef>,
    indexes: BTreeSet<(String, String)>,
}

impl Catalog {
    pub fn new(config: StatsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Catalog { config, ..Default::default() })
    }

    pub fn register_base(&mut self, schema: Schema, stats: TableStats) {
        self.schemas.insert(stats.dataset.clone(), schema);
        self.base.insert(stats.dataset.clone(), stats);
    }

    pub fn schema(&self, dataset: &str) -> Result<&Schema> {
        self.schemas.get(dataset).ok_or_else(|| Error::UnknownSource(dataset.to_string()))
    }

    pub fn base_datasets(&self) -> impl Iterator<Item = &str> {
        self.base.keys().map(String::as_str)
    }

    /// Registers statistics for a filtered or intermediate source. Base
    /// statistics of the datasets it replaces stay reachable through
    /// [`Catalog::base_view`].
    pub fn register_updated_stats(&mut self, source: &DataSourceRef, stats: TableStats) -> Result<()> {
        for b in source.base_names() {
            if !self.base.contains_key(&b) {
                return Err(Error::UnknownSource(b));
            }
        }
        self.refs.insert(source.name.clone(), source.clone());
        self.shadow.insert(source.name.clone(), stats);
        Ok(())
    }

    /// Drops all shadowed statistics, restoring the load-time state.
    pub fn clear_updates(&mut self) {
        self.shadow.clear();
        self.refs.clear();
    }

    pub fn lookup_table(&self, source: &str) -> Result<&TableStats> {
        self.shadow.get(source).or_else(|| self.base.get(source)).ok_or_else(|| Error::UnknownSource(source.to_string()))
    }

    pub fn lookup(&self, source: &str, column: &str) -> Result<&ColumnStats> {
        column_of(self.lookup_table(source)?, column)
    }

    pub fn base_view(&self) -> BaseView<'_> {
        BaseView { catalog: self }
    }

    /// U(source.column). When the column carries no sketch, as happens when
    /// statistics collection was skipped for a materialization, the distinct
    /// count is inherited from the input column, capped by the row count.
    pub fn distinct(&self, source: &str, column: &str) -> Result<f64> {
        let table = self.lookup_table(source)?;
        if let Some(c) = table.columns.get(column) {
            return Ok(c.distinct());
        }
        if let Some(derived) = self.refs.get(source).and_then(|r| r.derived_columns().iter().find(|d| d.name == column)) {
            let upstream = self.distinct(&derived.from.source, &derived.from.column)?;
            return Ok(upstream.min(table.row_count as f64));
        }
        column_of(table, column).map(ColumnStats::distinct)
    }

    pub fn register_index(&mut self, dataset: &str, column: &str) -> Result<()> {
        let schema = self.schema(dataset)?;
        if schema.index_of(column).is_none() {
            return Err(Error::UnknownColumn {
                source_name: dataset.to_string(),
                column: column.to_string(),
                candidates: schema.names().collect::<Vec<_>>().join(", "),
            });
        }
        self.indexes.insert((dataset.to_string(), column.to_string()));
        Ok(())
    }

    pub fn has_index(&self, dataset: &str, column: &str) -> bool {
        self.indexes.contains(&(dataset.to_string(), column.to_string()))
    }

    pub fn indexes(&self) -> impl Iterator<Item = &(String, String)> {
        self.indexes.iter()
    }

    /// Writes `meta.json` plus one binary sketch file per column.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = 0usize;
        let mut write_tables = |tables: &BTreeMap<String, TableStats>| -> Result<Vec<TableMeta>> {
            let mut out = Vec::new();
            for t in tables.values() {
                let mut columns = BTreeMap::new();
                for (name, c) in &t.columns {
                    let file = format!("sketch-{files:05}.bin");
                    files += 1;
                    let mut enc = Encoder::new();
                    enc.u8(FORMAT_VERSION);
                    enc.u64(c.exact_distinct.map_or(u64::MAX, |n| n));
                    c.gk.encode(&mut enc);
                    c.hll.encode(&mut enc);
                    fs::write(dir.join(&file), enc.into_inner())?;
                    columns.insert(name.clone(), file);
                }
                out.push(TableMeta { dataset: t.dataset.clone(), row_count: t.row_count, byte_size: t.byte_size, columns });
            }
            Ok(out)
        };
        let meta = CatalogMeta {
            config: self.config.clone(),
            schemas: self.schemas.clone(),
            base: write_tables(&self.base)?,
            shadow: write_tables(&self.shadow)?,
            refs: self.refs.values().cloned().collect(),
            indexes: self.indexes.iter().cloned().collect(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Catalog> {
        let meta: CatalogMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let read_tables = |tables: Vec<TableMeta>| -> Result<BTreeMap<String, TableStats>> {
            let mut out = BTreeMap::new();
            for t in tables {
                let mut columns = BTreeMap::new();
                for (name, file) in t.columns {
                    let buf = fs::read(dir.join(&file))?;
                    let mut dec = Decoder::new(&buf);
                    dec.version()?;
                    let exact = dec.u64()?;
                    let gk = GkSketch::decode(&mut dec)?;
                    let hll = HllSketch::decode(&mut dec)?;
                    columns.insert(name, ColumnStats { gk, hll, exact_distinct: (exact != u64::MAX).then_some(exact) });
                }
                out.insert(t.dataset.clone(), TableStats { dataset: t.dataset, row_count: t.row_count, byte_size: t.byte_size, columns });
            }
            Ok(out)
        };
        Ok(Catalog {
            config: meta.config,
            schemas: meta.schemas,
            base: read_tables(meta.base)?,
            shadow: read_tables(meta.shadow)?,
            refs: meta.refs.into_iter().map(|r| (r.name.clone(), r)).collect(),
            indexes: meta.indexes.into_iter().collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TableMeta {
    dataset: String,
    row_count: u64,
    byte_size: u64,
    columns: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogMeta {
    config: StatsConfig,
    schemas: BTreeMap<String, Schema>,
    base: Vec<TableMeta>,
    shadow: Vec<TableMeta>,
    refs: Vec<DataSourceRef>,
    indexes: Vec<(String, String)>,
}
