use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::generator::GeneratorSpec;
use crate::baselines::PilotConfig;
use crate::costmodel::CostConfig;
use crate::engine::BuiltinUdf;
use crate::error::{Error, Result};
use crate::query::{parse, Bindings, Query};
use crate::value::Schema;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dynamic,
    StaticCostBased,
    WorstOrder,
    BestOrder,
    PilotRun,
    IngresLike,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::Dynamic, Strategy::StaticCostBased, Strategy::WorstOrder, Strategy::BestOrder, Strategy::PilotRun, Strategy::IngresLike];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dynamic => "dynamic",
            Strategy::StaticCostBased => "static_cost_based",
            Strategy::WorstOrder => "worst_order",
            Strategy::BestOrder => "best_order",
            Strategy::PilotRun => "pilot_run",
            Strategy::IngresLike => "ingres_like",
        }
    }

    /// Strategies that read the dynamic run's trace.
    pub fn needs_dynamic(self) -> bool {
        matches!(self, Strategy::WorstOrder | Strategy::BestOrder)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Strategy::ALL.into_iter().find(|st| st.name() == norm).ok_or_else(|| {
            Error::Config(format!("unknown strategy `{s}`; expected one of {}", Strategy::ALL.map(Strategy::name).join(", ")))
        })
    }
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvDataset {
    pub name: String,
    pub path: PathBuf,
    pub schema: Schema,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Generated {
        generator: GeneratorSpec,
        /// Extra copies of generated tables, alias to table.
        #[serde(default)]
        aliases: BTreeMap<String, String>,
        /// Keep only these tables (and the aliases' sources); all when absent.
        #[serde(default)]
        tables: Option<Vec<String>>,
    },
    Csv {
        datasets: Vec<CsvDataset>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSpec {
    pub dataset: String,
    pub column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub name: String,
    pub text: String,
    #[serde(default)]
    pub bindings: Bindings,
}

impl QuerySpec {
    pub fn parse(&self) -> Result<Query> {
        parse(&self.text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub partitions: usize,
    pub cost: CostConfig,
    pub pilot: PilotConfig,
    pub skip_last_stats: bool,
    /// Write `timings.csv` with wall-clock times next to the counters.
    pub timings: bool,
    pub spill_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            partitions: 4,
            cost: CostConfig::default(),
            pilot: PilotConfig::default(),
            skip_last_stats: true,
            timings: false,
            spill_dir: None,
        }
    }
}

/// A self-contained experiment: data, indexes, UDFs, queries and the
/// strategies to compare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    pub seed: u64,
    pub data: DataSpec,
    #[serde(default)]
    pub indexes: Vec<IndexSpec>,
    #[serde(default)]
    pub udfs: BTreeMap<String, BuiltinUdf>,
    #[serde(default)]
    pub queries: Vec<QuerySpec>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub config: RunConfig,
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: WorkloadSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file. Relative CSV paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut spec = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let (DataSpec::Csv { datasets }, Some(dir)) = (&mut spec.data, path.parent()) {
            for d in datasets {
                if d.path.is_relative() {
                    d.path = dir.join(&d.path);
                }
            }
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Dataset names the spec provides, aliases included.
    pub fn dataset_names(&self) -> Result<BTreeSet<String>> {
        match &self.data {
            DataSpec::Generated { generator, aliases, tables } => {
                let all: BTreeSet<String> =
                    super::generator::row_counts(generator.family, 0.001).into_iter().map(|(n, _)| n.to_string()).collect();
                let mut out = match tables {
                    Some(t) => {
                        for n in t {
                            if !all.contains(n) {
                                return Err(Error::Config(format!("generator has no table `{n}`")));
                            }
                        }
                        t.iter().cloned().collect()
                    }
                    None => all.clone(),
                };
                for (alias, src) in aliases {
                    if !all.contains(src) {
                        return Err(Error::Config(format!("alias `{alias}` names unknown table `{src}`")));
                    }
                    if !out.insert(alias.clone()) {
                        return Err(Error::Config(format!("alias `{alias}` shadows a table")));
                    }
                }
                Ok(out)
            }
            DataSpec::Csv { datasets } => {
                let mut out = BTreeSet::new();
                for d in datasets {
                    d.schema.validate()?;
                    if !out.insert(d.name.clone()) {
                        return Err(Error::Config(format!("dataset `{}` declared twice", d.name)));
                    }
                }
                Ok(out)
            }
        }
    }

    /// Checks that every dataset, UDF and parameter the queries use resolves.
    pub fn validate(&self) -> Result<()> {
        self.config.cost.validate()?;
        if self.config.partitions == 0 {
            return Err(Error::Config("partition count must be positive".into()));
        }
        if !(self.config.pilot.sample_rate > 0.0 && self.config.pilot.sample_rate <= 1.0) {
            return Err(Error::Config(format!("sample rate {} outside (0,1]", self.config.pilot.sample_rate)));
        }
        let names = self.dataset_names()?;
        for ix in &self.indexes {
            if !names.contains(&ix.dataset) {
                return Err(Error::UnknownSource(ix.dataset.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for qs in &self.queries {
            if !seen.insert(&qs.name) {
                return Err(Error::Config(format!("query `{}` declared twice", qs.name)));
            }
            let q = qs.parse()?;
            for d in q.base_datasets() {
                if !names.contains(&d) {
                    return Err(Error::UnknownSource(d));
                }
            }
            for u in q.udfs() {
                if !self.udfs.contains_key(&u) {
                    return Err(Error::UnknownUdf(u));
                }
            }
            for p in q.parameters() {
                if !qs.bindings.contains_key(&p) {
                    return Err(Error::UnboundParameter(p));
                }
            }
        }
        Ok(())
    }
}
