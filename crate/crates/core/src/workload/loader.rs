use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::generator::{generate, GeneratedTable};
use super::spec::{CsvDataset, DataSpec, QuerySpec, WorkloadSpec};
use crate::catalog::{stats_on_load, Catalog};
use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::query::Query;
use crate::value::{Row, Schema, Value};

/// Reads a CSV file with a header row naming the schema's columns in order.
pub fn read_csv(path: &Path, schema: &Schema) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<&str> = schema.names().collect();
    if header != expected {
        return Err(Error::Schema(format!(
            "{}: header [{}] does not match schema [{}]",
            path.display(),
            header.join(", "),
            expected.join(", ")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // Line 1 is the header.
        let line = i + 2;
        if record.len() != schema.columns.len() {
            return Err(Error::Schema(format!(
                "{} row {line}: expected {} fields, found {}",
                path.display(),
                schema.columns.len(),
                record.len()
            )));
        }
        let row = record
            .iter()
            .zip(&schema.columns)
            .map(|(raw, col)| {
                col.ty.parse_field(raw).ok_or_else(|| {
                    Error::TypeMismatch(format!(
                        "{} row {line}: `{raw}` is not a valid {:?} for column {}",
                        path.display(),
                        col.ty,
                        col.name
                    ))
                })
            })
            .collect::<Result<Row>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_csv(path: &Path, schema: &Schema, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(schema.names())?;
    for row in rows {
        w.write_record(row.iter().map(|v| match v {
            Value::Null => String::new(),
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.clone(),
        }))?;
    }
    w.flush()?;
    Ok(())
}

/// Materializes the spec's datasets in memory, aliases included.
pub fn dataset_rows(spec: &WorkloadSpec) -> Result<Vec<GeneratedTable>> {
    let names = spec.dataset_names()?;
    match &spec.data {
        DataSpec::Generated { generator, aliases, .. } => {
            let generated = generate(generator, spec.seed)?;
            let mut out = Vec::new();
            for t in &generated {
                if names.contains(&t.name) {
                    out.push(t.clone());
                }
            }
            for (alias, src) in aliases {
                let t = generated.iter().find(|t| &t.name == src).ok_or_else(|| Error::UnknownSource(src.clone()))?;
                out.push(GeneratedTable { name: alias.clone(), schema: t.schema.clone(), rows: t.rows.clone() });
            }
            Ok(out)
        }
        DataSpec::Csv { datasets } => datasets
            .iter()
            .map(|d| Ok(GeneratedTable { name: d.name.clone(), schema: d.schema.clone(), rows: read_csv(&d.path, &d.schema)? }))
            .collect(),
    }
}

/// Writes every dataset of `spec` to `dir` as `<name>.csv` and returns the
/// equivalent CSV data section.
pub fn export_csv(spec: &WorkloadSpec, dir: &Path) -> Result<DataSpec> {
    std::fs::create_dir_all(dir)?;
    let mut datasets = Vec::new();
    for t in dataset_rows(spec)? {
        let file = format!("{}.csv", t.name);
        write_csv(&dir.join(&file), &t.schema, &t.rows)?;
        datasets.push(CsvDataset { name: t.name, path: file.into(), schema: t.schema });
    }
    Ok(DataSpec::Csv { datasets })
}

/// Columns the queries join or filter on, per dataset.
pub fn tracked_columns(queries: &[Query]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for q in queries {
        for j in &q.joins {
            out.entry(j.left.source.clone()).or_default().insert(j.left.column.clone());
            out.entry(j.right.source.clone()).or_default().insert(j.right.column.clone());
        }
        for (d, preds) in &q.local_predicates {
            for p in preds {
                if let Some(c) = p.column() {
                    out.entry(d.clone()).or_default().insert(c.column.clone());
                }
            }
        }
    }
    out
}

pub struct LoadedWorkload {
    pub spec: WorkloadSpec,
    pub engine: Engine,
    pub catalog: Catalog,
    pub queries: Vec<(QuerySpec, Query)>,
}

/// Loads data into a fresh engine, gathers load-time statistics on the
/// columns the queries use (all columns for datasets no query touches), and
/// builds the declared indexes and UDFs.
pub fn load_workload(spec: &WorkloadSpec) -> Result<LoadedWorkload> {
    spec.validate()?;
    let queries = spec.queries.iter().map(|qs| Ok((qs.clone(), qs.parse()?))).collect::<Result<Vec<_>>>()?;
    let tracked = tracked_columns(&queries.iter().map(|(_, q)| q.clone()).collect::<Vec<_>>());
    let mut engine = Engine::new(EngineConfig { partitions: spec.config.partitions, spill_dir: spec.config.spill_dir.clone() })?;
    let mut catalog = Catalog::new(spec.config.cost.stats.clone())?;
    for t in dataset_rows(spec)? {
        engine.load_table(&t.name, t.schema.clone(), t.rows)?;
        let cols: Option<Vec<String>> = tracked.get(&t.name).map(|s| s.iter().cloned().collect());
        let stats = stats_on_load(&t.name, &t.schema, &engine.table(&t.name)?.relation.partitions, cols.as_deref(), &catalog.config)?;
        catalog.register_base(t.schema, stats);
    }
    for ix in &spec.indexes {
        catalog.register_index(&ix.dataset, &ix.column)?;
        engine.create_index(&ix.dataset, &ix.column)?;
    }
    for (name, udf) in &spec.udfs {
        engine.udfs.register_builtin(name, udf.clone());
    }
    Ok(LoadedWorkload { spec: spec.clone(), engine, catalog, queries })
}
