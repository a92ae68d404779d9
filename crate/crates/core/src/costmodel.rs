//! Cardinality and selectivity estimation and physical join selection.

use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnStats, StatsConfig};
use crate::error::{Error, Result};
use crate::query::{CmpOp, Predicate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub broadcast_threshold_bytes: u64,
    pub default_eq_selectivity: f64,
    pub default_range_selectivity: f64,
    #[serde(flatten)]
    pub stats: StatsConfig,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            broadcast_threshold_bytes: 1 << 20,
            default_eq_selectivity: 0.1,
            default_range_selectivity: 1.0 / 3.0,
            stats: StatsConfig::default(),
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.broadcast_threshold_bytes == 0 {
            return Err(Error::Config("broadcast threshold must be positive".into()));
        }
        for s in [self.default_eq_selectivity, self.default_range_selectivity] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Config(format!("default selectivity {s} outside (0,1]")));
            }
        }
        self.stats.validate()
    }
}

/// `S(A) * S(B) / max(U(A.k), U(B.k))`.
pub fn estimate_join_cardinality(s_a: f64, s_b: f64, u_a: f64, u_b: f64) -> Result<f64> {
    if s_a < 0.0 || s_b < 0.0 || u_a < 0.0 || u_b < 0.0 {
        return Err(Error::DegenerateStats(format!("negative input ({s_a}, {s_b}, {u_a}, {u_b})")));
    }
    if s_a == 0.0 || s_b == 0.0 {
        return Ok(0.0);
    }
    let u = u_a.max(u_b);
    if u == 0.0 {
        return Err(Error::DegenerateStats(format!("zero distinct keys for inputs of size {s_a} and {s_b}")));
    }
    Ok(s_a * s_b / u)
}

/// Selectivity of one local predicate. Fixed-value predicates use the
/// column's sketches when available; parameterized and UDF predicates fall
/// back to the configured defaults.
pub fn estimate_filter_selectivity(stats: Option<&ColumnStats>, pred: &Predicate, cfg: &CostConfig) -> f64 {
    match (pred, stats) {
        (Predicate::Equals { .. }, Some(s)) => {
            if s.count() == 0 {
                0.0
            } else {
                (1.0 / s.distinct().max(1.0)).min(1.0)
            }
        }
        (Predicate::Equals { .. }, None) => cfg.default_eq_selectivity,
        (Predicate::Range { lo, hi, .. }, Some(s)) => match s.histogram(cfg.stats.buckets) {
            Ok(h) => h.range_selectivity(as_ref(lo), as_ref(hi)),
            Err(_) => 0.0,
        },
        (Predicate::Range { .. }, None) => cfg.default_range_selectivity,
        (Predicate::Param { op: CmpOp::Eq, .. }, _) => cfg.default_eq_selectivity,
        (Predicate::Param { .. }, _) | (Predicate::Udf { .. }, _) => cfg.default_range_selectivity,
    }
}

fn as_ref<T>(b: &Bound<T>) -> Bound<&T> {
    match b {
        Bound::Included(v) => Bound::Included(v),
        Bound::Excluded(v) => Bound::Excluded(v),
        Bound::Unbounded => Bound::Unbounded,
    }
}

/// Conjunction under the independence assumption: the product of the
/// individual selectivities.
pub fn estimate_conjunction<'a>(preds: impl IntoIterator<Item = (Option<&'a ColumnStats>, &'a Predicate)>, cfg: &CostConfig) -> f64 {
    preds.into_iter().map(|(s, p)| estimate_filter_selectivity(s, p, cfg)).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JoinAlgorithm {
    Hash,
    Broadcast {
        side: Side,
    },
    /// `broadcast` is replicated; the other side is probed through its index.
    IndexedNestedLoop {
        broadcast: Side,
    },
}

impl JoinAlgorithm {
    /// Plan notation: `b` for broadcast, `i` for indexed nested loop.
    pub fn tag(self) -> &'static str {
        match self {
            JoinAlgorithm::Hash => "",
            JoinAlgorithm::Broadcast { .. } => "b",
            JoinAlgorithm::IndexedNestedLoop { .. } => "i",
        }
    }
}

/// What algorithm selection needs to know about one join input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideInfo {
    pub name: String,
    pub is_base: bool,
    pub filtered: bool,
    pub est_rows: f64,
    pub est_bytes: f64,
    /// Base dataset with a secondary index on a join key of this edge.
    pub indexed_on_key: bool,
}

/// Indexed nested loop when the smaller input fits the broadcast threshold,
/// is filtered, and the other input is an indexed base dataset; otherwise
/// broadcast of the smaller input when it fits; otherwise hash.
pub fn choose_algorithm(left: &SideInfo, right: &SideInfo, cfg: &CostConfig) -> JoinAlgorithm {
    let left_smaller = (left.est_bytes, &left.name) <= (right.est_bytes, &right.name);
    let (small, big, side) = if left_smaller { (left, right, Side::Left) } else { (right, left, Side::Right) };
    if small.est_bytes > cfg.broadcast_threshold_bytes as f64 {
        return JoinAlgorithm::Hash;
    }
    if small.filtered && big.is_base && big.indexed_on_key {
        JoinAlgorithm::IndexedNestedLoop { broadcast: side }
    } else {
        JoinAlgorithm::Broadcast { side }
    }
}

/// Row count and key distinct count of one join input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideEstimate {
    pub rows: f64,
    pub distinct: f64,
}

/// Ranks candidate joins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Output cardinality from row counts and key distinct counts.
    #[default]
    Eq1,
    /// Product of the input row counts only.
    RowProduct,
}

impl Scoring {
    pub fn score(self, l: SideEstimate, r: SideEstimate) -> Result<f64> {
        match self {
            Scoring::Eq1 => estimate_join_cardinality(l.rows, r.rows, l.distinct, r.distinct),
            Scoring::RowProduct => Ok(l.rows * r.rows),
        }
    }
}
