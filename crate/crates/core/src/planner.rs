//! Picks the next join to execute from current statistics, and orders the
//! final two joins.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::costmodel::{choose_algorithm, estimate_conjunction, CostConfig, JoinAlgorithm, Scoring, Side, SideEstimate, SideInfo};
use crate::error::{Error, Result};
use crate::query::{joined_source, JoinEdge, Query};

/// Estimated size and shape of one source of the current query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEstimate {
    pub name: String,
    pub rows: f64,
    pub row_width: f64,
    pub is_base: bool,
    pub filtered: bool,
}

/// One evaluated join edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEstimate {
    pub edge: JoinEdge,
    pub estimate: f64,
    pub algorithm: JoinAlgorithm,
    pub left: SourceEstimate,
    pub right: SourceEstimate,
}

impl CandidateEstimate {
    pub fn name(&self) -> String {
        self.edge.name()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    SingleJoin,
    TwoJoinTree,
}

/// A planning decision. For a two-join tree `joins` holds the inner join
/// followed by the outer one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub kind: StepKind,
    pub joins: Vec<CandidateEstimate>,
    pub candidates: Vec<CandidateEstimate>,
}

/// How base sources with unexecuted local predicates are sized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterEstimation {
    /// Multiply estimated selectivities into the base row count.
    Selectivity,
    /// Use the unfiltered base row count.
    BaseCardinality,
}

pub struct Planner<'a> {
    pub catalog: &'a Catalog,
    pub cfg: &'a CostConfig,
    pub scoring: Scoring,
    pub filters: FilterEstimation,
    evaluations: Cell<usize>,
}

impl<'a> Planner<'a> {
    pub fn new(catalog: &'a Catalog, cfg: &'a CostConfig) -> Self {
        Planner { catalog, cfg, scoring: Scoring::Eq1, filters: FilterEstimation::Selectivity, evaluations: Cell::new(0) }
    }

    pub fn with_scoring(mut self, scoring: Scoring, filters: FilterEstimation) -> Self {
        self.scoring = scoring;
        self.filters = filters;
        self
    }

    /// Number of join estimates computed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    pub fn source(&self, q: &Query, name: &str) -> Result<SourceEstimate> {
        let src = q.sources.get(name).ok_or_else(|| Error::UnknownSource(name.to_string()))?;
        let table = self.catalog.lookup_table(name)?;
        let preds = q.predicates_of(name);
        let mut rows = table.row_count as f64;
        if !preds.is_empty() && self.filters == FilterEstimation::Selectivity {
            let sel = estimate_conjunction(preds.iter().map(|p| (p.column().and_then(|c| table.columns.get(&c.column)), p)), self.cfg);
            rows *= sel;
        }
        Ok(SourceEstimate {
            name: name.to_string(),
            rows,
            row_width: table.row_width(),
            is_base: src.is_base(),
            filtered: src.intermediate_filtered() || !preds.is_empty(),
        })
    }

    /// U over a (possibly composite) key: the product of the per-column
    /// distinct counts, capped by the row count.
    pub fn key_distinct(&self, source: &SourceEstimate, columns: &[&str]) -> Result<f64> {
        let mut u = 1.0;
        for c in columns {
            u *= self.catalog.distinct(&source.name, c)?;
        }
        let u = u.min(source.rows);
        Ok(if source.rows > 0.0 { u.max(1.0) } else { u })
    }

    fn side_info(&self, s: &SourceEstimate, edge: &JoinEdge) -> SideInfo {
        let indexed = s.is_base && edge.columns_of(&s.name).iter().any(|c| self.catalog.has_index(&s.name, c));
        SideInfo {
            name: s.name.clone(),
            is_base: s.is_base,
            filtered: s.filtered,
            est_rows: s.rows,
            est_bytes: s.rows * s.row_width,
            indexed_on_key: indexed,
        }
    }

    fn score(&self, l: &SourceEstimate, r: &SourceEstimate, edge: &JoinEdge) -> Result<f64> {
        self.evaluations.set(self.evaluations.get() + 1);
        let ul = self.key_distinct(l, &edge.columns_of(&edge.left))?;
        let ur = self.key_distinct(r, &edge.columns_of(&edge.right))?;
        self.scoring.score(SideEstimate { rows: l.rows, distinct: ul }, SideEstimate { rows: r.rows, distinct: ur })
    }

    pub fn evaluate(&self, q: &Query, edge: &JoinEdge) -> Result<CandidateEstimate> {
        let left = self.source(q, &edge.left)?;
        let right = self.source(q, &edge.right)?;
        let estimate = self.score(&left, &right, edge)?;
        let algorithm = choose_algorithm(&self.side_info(&left, edge), &self.side_info(&right, edge), self.cfg);
        Ok(CandidateEstimate { edge: edge.clone(), estimate, algorithm, left, right })
    }

    fn evaluate_all(&self, q: &Query) -> Result<Vec<CandidateEstimate>> {
        q.edges().iter().map(|e| self.evaluate(q, e)).collect()
    }

    fn argmin(candidates: &[CandidateEstimate]) -> &CandidateEstimate {
        candidates
            .iter()
            .min_by(|a, b| a.estimate.total_cmp(&b.estimate).then_with(|| a.name().cmp(&b.name())))
            .expect("at least one candidate")
    }

    /// The join edge with the least estimated output, over all current edges.
    pub fn next_cheapest_join(&self, q: &Query) -> Result<PlanStep> {
        let edges = q.edges().len();
        if edges <= 2 {
            return Err(Error::InvalidQuery(format!("next_cheapest_join needs more than two joins, query has {edges}")));
        }
        self.cheapest(q)
    }

    fn cheapest(&self, q: &Query) -> Result<PlanStep> {
        let candidates = self.evaluate_all(q)?;
        let best = Self::argmin(&candidates).clone();
        Ok(PlanStep { kind: StepKind::SingleJoin, joins: vec![best], candidates })
    }

    /// The only join of a one-join query.
    pub fn single_join(&self, q: &Query) -> Result<PlanStep> {
        if q.edges().len() != 1 {
            return Err(Error::InvalidQuery("single_join needs exactly one join".into()));
        }
        self.cheapest(q)
    }

    /// Orders the last two joins: the lower estimate runs first and its
    /// output feeds the other.
    pub fn final_two_join_plan(&self, q: &Query) -> Result<PlanStep> {
        let edges = q.edges();
        if edges.len() != 2 {
            return Err(Error::InvalidQuery(format!("final_two_join_plan needs exactly two joins, query has {}", edges.len())));
        }
        let candidates = self.evaluate_all(q)?;
        let inner = Self::argmin(&candidates).clone();
        let outer_edge = candidates.iter().find(|c| c.edge != inner.edge).expect("two candidates").edge.clone();
        let shared = if inner.edge.touches(&outer_edge.left) { outer_edge.left.clone() } else { outer_edge.right.clone() };
        let shared_est = if shared == inner.left.name { &inner.left } else { &inner.right };
        let inner_ref = joined_source(q, &inner.edge.left, &inner.edge.right)?;
        let inner_out = SourceEstimate {
            name: inner_ref.name.clone(),
            rows: inner.estimate,
            row_width: inner.left.row_width + inner.right.row_width,
            is_base: false,
            filtered: inner.left.filtered || inner.right.filtered,
        };
        let other = self.source(q, outer_edge.other(&shared))?;
        let shared_cols = outer_edge.columns_of(&shared);
        let other_cols = outer_edge.columns_of(&other.name);
        self.evaluations.set(self.evaluations.get() + 1);
        let u_inner = self.key_distinct(shared_est, &shared_cols)?.min(inner_out.rows);
        let u_other = self.key_distinct(&other, &other_cols)?;
        let shared_is_left = outer_edge.left == shared;
        let (l_est, r_est) = if shared_is_left {
            (SideEstimate { rows: inner_out.rows, distinct: u_inner }, SideEstimate { rows: other.rows, distinct: u_other })
        } else {
            (SideEstimate { rows: other.rows, distinct: u_other }, SideEstimate { rows: inner_out.rows, distinct: u_inner })
        };
        let estimate = self.scoring.score(l_est, r_est)?;
        let inner_info = SideInfo { indexed_on_key: false, ..self.side_info(&inner_out, &outer_edge) };
        let other_info = self.side_info(&other, &outer_edge);
        let (left, right, algorithm) = if shared_is_left {
            (inner_out, other, choose_algorithm(&inner_info, &other_info, self.cfg))
        } else {
            (other, inner_out, choose_algorithm(&other_info, &inner_info, self.cfg))
        };
        let outer = CandidateEstimate { edge: outer_edge, estimate, algorithm, left, right };
        Ok(PlanStep { kind: StepKind::TwoJoinTree, joins: vec![inner, outer], candidates })
    }
}

/// Key pairs of `edge` reordered so that, for an indexed nested-loop join,
/// the first key column of the probed side carries an index.
pub fn index_first_keys(edge: &JoinEdge, algorithm: JoinAlgorithm, catalog: &Catalog) -> Vec<(String, String)> {
    let mut keys = edge.keys.clone();
    if let JoinAlgorithm::IndexedNestedLoop { broadcast } = algorithm {
        let probed = match broadcast {
            Side::Left => &edge.right,
            Side::Right => &edge.left,
        };
        if let Some(pos) = keys.iter().position(|(l, r)| {
            let c = if broadcast == Side::Left { r } else { l };
            catalog.has_index(probed, c)
        }) {
            keys.swap(0, pos);
        }
    }
    keys
}
