use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptjoin::catalog::Catalog;
use adaptjoin::optimizer::run_dynamic;
use adaptjoin::workload::harness::optimizer_config;
use adaptjoin::workload::loader::export_csv;
use adaptjoin::workload::{
    builtin, load_workload, run_strategy, run_workload, LoadedWorkload, RunConfig, Strategy, WorkloadSpec, BUILTIN_NAMES,
};
use adaptjoin::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "adaptjoin", version, about = "Generate data, load it and compare join strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a workload's datasets as CSV plus a workload file that reads them.
    Generate {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Load a workload, gather load-time statistics and persist the catalog.
    Load {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every query under the selected strategies and write reports.
    Run {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Reuse statistics persisted by `load` instead of recomputing them.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Also write wall-clock times.
        #[arg(long)]
        timings: bool,
    },
    /// Print one query's plan under one strategy as JSON.
    Explain {
        #[command(flatten)]
        workload: WorkloadArgs,
        /// Query name; defaults to the first query.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value = "dynamic")]
        strategy: Strategy,
    },
    /// Compare catalog estimates against exact values from the data.
    Stats {
        #[command(flatten)]
        workload: WorkloadArgs,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in workload name.
    #[arg(long = "workload", value_name = "NAME")]
    name: Option<String>,
    /// Workload file (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadArgs {
    #[command(flatten)]
    source: Source,
    /// Scale factor for built-in workloads.
    #[arg(long, default_value_t = 0.01)]
    sf: f64,
    /// Run configuration file (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    partitions: Option<usize>,
    /// Bytes below which the smaller join input is broadcast.
    #[arg(long)]
    broadcast_threshold: Option<u64>,
    #[arg(long)]
    gk_eps: Option<f64>,
    #[arg(long)]
    hll_p: Option<u8>,
    #[arg(long)]
    buckets: Option<usize>,
    /// Pilot-run sample rate.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Pilot-run limit on qualifying rows per dataset.
    #[arg(long)]
    limit: Option<u64>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<Strategy>,
}

impl WorkloadArgs {
    fn resolve(&self) -> Result<WorkloadSpec> {
        let mut spec = match (&self.source.name, &self.source.spec) {
            (Some(name), _) => builtin(name, self.sf, self.seed.unwrap_or(42))?,
            (None, Some(path)) => WorkloadSpec::from_file(path)?,
            (None, None) => return Err(Error::Config(format!("pass --workload ({}) or --spec", BUILTIN_NAMES.join(", ")))),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            spec.config = serde_json::from_str::<RunConfig>(&text)?;
        }
        let c = &mut spec.config;
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(p) = self.partitions {
            c.partitions = p;
        }
        if let Some(b) = self.broadcast_threshold {
            c.cost.broadcast_threshold_bytes = b;
        }
        if let Some(e) = self.gk_eps {
            c.cost.stats.epsilon = e;
        }
        if let Some(p) = self.hll_p {
            c.cost.stats.hll_precision = p;
        }
        if let Some(b) = self.buckets {
            c.cost.stats.buckets = b;
        }
        if let Some(r) = self.sample_rate {
            c.pilot.sample_rate = r;
        }
        if let Some(l) = self.limit {
            c.pilot.limit = Some(l);
        }
        if !self.strategies.is_empty() {
            spec.strategies = self.strategies.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn generate(spec: &WorkloadSpec, out: &Path) -> Result<()> {
    let data = export_csv(spec, out)?;
    let csv_spec = WorkloadSpec { data, ..spec.clone() };
    std::fs::write(out.join("workload.json"), csv_spec.to_json()?)?;
    eprintln!("wrote {} datasets to {}", csv_spec.dataset_names()?.len(), out.display());
    Ok(())
}

fn load(spec: &WorkloadSpec, out: &Path) -> Result<()> {
    let w = load_workload(spec)?;
    w.catalog.persist(&out.join("catalog"))?;
    let tables: Vec<_> = w
        .catalog
        .base_datasets()
        .map(|d| {
            let t = w.catalog.lookup_table(d)?;
            Ok(json!({"dataset": d, "rows": t.row_count, "columns": t.columns.keys().collect::<Vec<_>>()}))
        })
        .collect::<Result<_>>()?;
    print_json(&json!({"workload": spec.name, "catalog": out.join("catalog"), "datasets": tables}))
}

fn with_catalog(mut w: LoadedWorkload, dir: Option<&Path>) -> Result<LoadedWorkload> {
    if let Some(dir) = dir {
        let catalog = Catalog::load(dir)?;
        let expected: BTreeSet<&str> = w.catalog.base_datasets().collect();
        let found: BTreeSet<&str> = catalog.base_datasets().collect();
        if expected != found {
            return Err(Error::Config(format!("catalog at {} covers {found:?}, workload needs {expected:?}", dir.display())));
        }
        w.catalog = catalog;
    }
    Ok(w)
}

fn run(spec: &WorkloadSpec, out: &Path, catalog: Option<&Path>, timings: bool) -> Result<()> {
    let w = with_catalog(load_workload(spec)?, catalog)?;
    let report = run_workload(&w)?;
    report.write(out, timings || spec.config.timings)?;
    emit(&report.combined_csv())
}

fn explain(spec: &WorkloadSpec, query: Option<&str>, strategy: Strategy) -> Result<()> {
    let w = load_workload(spec)?;
    let (qs, q) = match query {
        Some(name) => w.queries.iter().find(|(qs, _)| qs.name == name).ok_or_else(|| Error::Config(format!("no query named `{name}`")))?,
        None => w.queries.first().ok_or_else(|| Error::Config("workload has no queries".into()))?,
    };
    let trace =
        if strategy.needs_dynamic() { Some(run_dynamic(q, &w.catalog, &w.engine, &optimizer_config(&w), &qs.bindings)?.1) } else { None };
    let (_, rep) = run_strategy(&w, qs, q, strategy, trace.as_ref())?;
    print_json(&json!({
        "query": qs.name,
        "strategy": strategy,
        "rendered": rep.rendered,
        "plan": rep.plan,
        "joins": rep.joins,
        "result_rows": rep.result_rows,
    }))
}

fn stats(spec: &WorkloadSpec) -> Result<()> {
    let w = load_workload(spec)?;
    let mut out = vec![];
    for d in w.catalog.base_datasets() {
        let t = w.catalog.lookup_table(d)?;
        let table = w.engine.table(d)?;
        let rows: Vec<_> = table.relation.rows().collect();
        for (col, cs) in &t.columns {
            let Some(i) = table.schema.index_of(col) else { continue };
            let mut values: Vec<_> = rows.iter().map(|r| r[i].clone()).filter(|v| !v.is_null()).collect();
            values.sort();
            let exact = values.iter().collect::<BTreeSet<_>>().len();
            let estimate = cs.distinct();
            let median = cs.gk.quantile(0.5).ok().map(|v| v.to_string());
            let exact_median = values.get(values.len().saturating_sub(1) / 2).map(|v| v.to_string());
            out.push(json!({
                "dataset": d,
                "column": col,
                "rows": t.row_count,
                "exact_rows": rows.len(),
                "distinct_estimate": estimate,
                "distinct_exact": exact,
                "distinct_relative_error": if exact == 0 { 0.0 } else { (estimate - exact as f64).abs() / exact as f64 },
                "median_estimate": median,
                "median_exact": exact_median,
            }));
        }
    }
    print_json(&serde_json::Value::Array(out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { workload, out_dir } => workload.resolve().and_then(|s| generate(&s, out_dir)),
        Command::Load { workload, out_dir } => workload.resolve().and_then(|s| load(&s, out_dir)),
        Command::Run { workload, out_dir, catalog, timings } => {
            workload.resolve().and_then(|s| run(&s, out_dir, catalog.as_deref(), *timings))
        }
        Command::Explain { workload, query, strategy } => workload.resolve().and_then(|s| explain(&s, query.as_deref(), *strategy)),
        Command::Stats { workload } => workload.resolve().and_then(|s| stats(&s)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
