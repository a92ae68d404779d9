//! Physical join trees and their executor.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costmodel::{JoinAlgorithm, Side};
use crate::engine::{CostCounters, Engine, Field, JoinMode, Relation};
use crate::error::{Error, Result};
use crate::query::{Bindings, ColumnRef, Predicate, Query};
use crate::value::Row;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PlanNode {
    /// Base dataset scan applying its local predicates.
    Scan {
        dataset: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        predicates: Vec<Predicate>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        est_rows: Option<f64>,
    },
    /// A previously materialized intermediate result.
    Read {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        est_rows: Option<f64>,
    },
    Join {
        algorithm: JoinAlgorithm,
        /// Pairs of base columns, left subtree first.
        keys: Vec<(ColumnRef, ColumnRef)>,
        left: Box<PlanNode>,
        right: Box<PlanNode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        est_rows: Option<f64>,
    },
}

impl PlanNode {
    pub fn scan(dataset: &str, predicates: Vec<Predicate>) -> PlanNode {
        PlanNode::Scan { dataset: dataset.to_string(), predicates, est_rows: None }
    }

    pub fn join(
        algorithm: JoinAlgorithm,
        keys: Vec<(ColumnRef, ColumnRef)>,
        left: PlanNode,
        right: PlanNode,
        est_rows: Option<f64>,
    ) -> PlanNode {
        PlanNode::Join { algorithm, keys, left: Box::new(left), right: Box::new(right), est_rows }
    }

    pub fn est_rows(&self) -> Option<f64> {
        match self {
            PlanNode::Scan { est_rows, .. } | PlanNode::Read { est_rows, .. } | PlanNode::Join { est_rows, .. } => *est_rows,
        }
    }

    /// Base datasets scanned by this subtree.
    pub fn datasets(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let PlanNode::Scan { dataset, .. } = n {
                out.insert(dataset.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&PlanNode)) {
        f(self);
        if let PlanNode::Join { left, right, .. } = self {
            left.visit(f);
            right.visit(f);
        }
    }

    /// Algorithms of every join, pre-order.
    pub fn algorithms(&self) -> Vec<JoinAlgorithm> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let PlanNode::Join { algorithm, .. } = n {
                out.push(*algorithm);
            }
        });
        out
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.algorithms().iter().any(|a| a.tag() == tag)
    }

    pub fn join_count(&self) -> usize {
        self.algorithms().len()
    }

    /// Maximum number of joins on a root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            PlanNode::Join { left, right, .. } => 1 + left.depth().max(right.depth()),
            _ => 0,
        }
    }

    /// Compact notation, e.g. `((A' ⋈b B) ⋈ (C' ⋈i D))`.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PlanNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanNode::Scan { dataset, predicates, .. } => {
                write!(f, "{dataset}{}", if predicates.is_empty() { "" } else { "'" })
            }
            PlanNode::Read { name, .. } => f.write_str(name),
            PlanNode::Join { algorithm, left, right, .. } => write!(f, "({left} ⋈{} {right})", algorithm.tag()),
        }
    }
}

/// Estimated and observed output of one executed join.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub join: String,
    pub algorithm: JoinAlgorithm,
    pub estimated: Option<f64>,
    pub actual: u64,
}

pub struct Execution {
    pub relation: Relation,
    pub counters: CostCounters,
    pub joins: Vec<JoinRecord>,
}

fn available(node: &PlanNode, engine: &Engine) -> Result<Vec<Field>> {
    match node {
        PlanNode::Scan { dataset, .. } => Ok(engine.table(dataset)?.relation.fields.clone()),
        PlanNode::Read { name, .. } => engine.materialized_fields(name),
        PlanNode::Join { left, right, .. } => {
            let mut f = available(left, engine)?;
            f.extend(available(right, engine)?);
            Ok(f)
        }
    }
}

fn bind_all(preds: &[Predicate], bindings: &Bindings) -> Result<Vec<Predicate>> {
    preds.iter().map(|p| p.bind(bindings)).collect()
}

/// Executes `node`, keeping only the base columns in `needed` (plus those
/// later joins require). Joins below the root add their output size to
/// `intermediate_tuples_total`.
pub fn execute(node: &PlanNode, engine: &Engine, bindings: &Bindings, needed: &BTreeSet<ColumnRef>) -> Result<Execution> {
    match node {
        PlanNode::Scan { dataset, predicates, .. } => {
            let fields = &engine.table(dataset)?.relation.fields;
            let keep: Vec<String> = fields.iter().filter(|f| needed.contains(&f.origin)).map(|f| f.name.clone()).collect();
            let (relation, counters) = engine.scan_filter(dataset, &bind_all(predicates, bindings)?, Some(&keep))?;
            Ok(Execution { relation, counters, joins: vec![] })
        }
        PlanNode::Read { name, .. } => {
            let rel = engine.reader(name)?;
            let keep: Vec<usize> = (0..rel.fields.len()).filter(|&i| needed.contains(&rel.fields[i].origin)).collect();
            let counters = CostCounters { tuples_scanned: rel.len(), ..Default::default() };
            Ok(Execution { relation: rel.project(&keep), counters, joins: vec![] })
        }
        PlanNode::Join { algorithm, keys, left, right, est_rows } => {
            if keys.is_empty() {
                return Err(Error::InvalidPlan(format!("join {node} has no key")));
            }
            let lavail = available(left, engine)?;
            let ravail = available(right, engine)?;
            for (l, r) in keys {
                if !lavail.iter().any(|f| &f.origin == l) || !ravail.iter().any(|f| &f.origin == r) {
                    return Err(Error::InvalidPlan(format!("key {l} = {r} does not match the inputs of {node}")));
                }
            }
            let restrict = |avail: &[Field], extra: &mut dyn Iterator<Item = &ColumnRef>| -> BTreeSet<ColumnRef> {
                let mut s: BTreeSet<ColumnRef> = needed.iter().filter(|c| avail.iter().any(|f| &f.origin == *c)).cloned().collect();
                s.extend(extra.cloned());
                s
            };
            let lneed = restrict(&lavail, &mut keys.iter().map(|k| &k.0));
            let rneed = restrict(&ravail, &mut keys.iter().map(|k| &k.1));
            let mut counters = CostCounters::default();
            let mut joins = Vec::new();
            let mut run_child = |child: &PlanNode, need: &BTreeSet<ColumnRef>| -> Result<Relation> {
                let e = execute(child, engine, bindings, need)?;
                counters += e.counters;
                if matches!(child, PlanNode::Join { .. }) {
                    counters.intermediate_tuples_total += e.relation.len();
                }
                joins.extend(e.joins);
                Ok(e.relation)
            };
            let out_of = |lf: &[Field], rf: &[Field]| -> Vec<usize> {
                let mut seen = BTreeSet::new();
                lf.iter()
                    .chain(rf)
                    .enumerate()
                    .filter(|(_, f)| needed.contains(&f.origin) && seen.insert(f.origin.clone()))
                    .map(|(i, _)| i)
                    .collect()
            };
            let (relation, c) = match algorithm {
                JoinAlgorithm::IndexedNestedLoop { broadcast } => {
                    let (bnode, inode, bneed) = match broadcast {
                        Side::Left => (left, right, &lneed),
                        Side::Right => (right, left, &rneed),
                    };
                    let PlanNode::Scan { dataset, predicates, .. } = inode.as_ref() else {
                        return Err(Error::NotBaseDataset(inode.to_string()));
                    };
                    let bcast = run_child(bnode, bneed)?;
                    let mut ikeys: Vec<(usize, String)> = keys
                        .iter()
                        .map(|(l, r)| {
                            let (b, i) = if *broadcast == Side::Left { (l, r) } else { (r, l) };
                            (bcast.index_of_origin(b).expect("key column kept"), i.column.clone())
                        })
                        .collect();
                    if let Some(pos) = ikeys.iter().position(|(_, c)| engine.index(dataset, c).is_some()) {
                        ikeys.swap(0, pos);
                    }
                    let base_fields = engine.table(dataset)?.relation.fields.clone();
                    let out =
                        if *broadcast == Side::Left { out_of(&bcast.fields, &base_fields) } else { out_of(&base_fields, &bcast.fields) };
                    engine.inl_join(bcast, dataset, &ikeys, &bind_all(predicates, bindings)?, *broadcast == Side::Left, &out)?
                }
                _ => {
                    let l = run_child(left, &lneed)?;
                    let r = run_child(right, &rneed)?;
                    let pairs: Vec<(usize, usize)> = keys
                        .iter()
                        .map(|(a, b)| (l.index_of_origin(a).expect("key kept"), r.index_of_origin(b).expect("key kept")))
                        .collect();
                    let out = out_of(&l.fields, &r.fields);
                    let mode = match algorithm {
                        JoinAlgorithm::Broadcast { side: Side::Left } => JoinMode::BroadcastLeft,
                        JoinAlgorithm::Broadcast { side: Side::Right } => JoinMode::BroadcastRight,
                        _ => JoinMode::Hash,
                    };
                    engine.join(l, r, &pairs, mode, &out)?
                }
            };
            counters += c;
            joins.push(JoinRecord { join: node.to_string(), algorithm: *algorithm, estimated: *est_rows, actual: relation.len() });
            Ok(Execution { relation, counters, joins })
        }
    }
}

fn origin_of(q: &Query, c: &ColumnRef) -> Result<ColumnRef> {
    q.sources.get(&c.source).and_then(|s| s.origin_of(&c.column)).ok_or_else(|| Error::UnresolvedColumn {
        column: c.to_string(),
        searched: q.sources.keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

/// Executes `plan` and returns rows laid out as `q`'s projection list.
pub fn execute_query(q: &Query, plan: &PlanNode, engine: &Engine, bindings: &Bindings) -> Result<(Vec<Row>, Execution)> {
    let proj: Vec<ColumnRef> = q.projections.iter().map(|c| origin_of(q, c)).collect::<Result<_>>()?;
    let needed: BTreeSet<ColumnRef> = proj.iter().cloned().collect();
    let exec = execute(plan, engine, bindings, &needed)?;
    let idx: Vec<usize> = proj
        .iter()
        .map(|c| exec.relation.index_of_origin(c).ok_or_else(|| Error::InvalidPlan(format!("plan output lacks projected column {c}"))))
        .collect::<Result<_>>()?;
    let rows = exec.relation.rows().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
    Ok((rows, exec))
}

fn key_set(plan: &PlanNode) -> BTreeSet<(ColumnRef, ColumnRef)> {
    let mut out = BTreeSet::new();
    plan.visit(&mut |n| {
        if let PlanNode::Join { keys, .. } = n {
            for (a, b) in keys {
                out.insert(if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) });
            }
        }
    });
    out
}

/// Checks that `plan` is a join tree over exactly `q`'s base datasets,
/// applying each of `q`'s join conjuncts and local predicates once.
pub fn validate_plan(q: &Query, plan: &PlanNode) -> Result<()> {
    let mut leaves = Vec::new();
    plan.visit(&mut |n| match n {
        PlanNode::Scan { dataset, predicates, .. } => leaves.push(Ok((dataset.clone(), predicates.clone()))),
        PlanNode::Read { name, .. } => leaves.push(Err(name.clone())),
        PlanNode::Join { .. } => {}
    });
    let mut seen = BTreeSet::new();
    for leaf in leaves {
        let (d, preds) = leaf.map_err(|n| Error::InvalidPlan(format!("plan reads intermediate `{n}`")))?;
        let src = q.sources.get(&d).ok_or_else(|| Error::InvalidPlan(format!("dataset `{d}` is not in the query")))?;
        if !src.is_base() {
            return Err(Error::InvalidPlan(format!("`{d}` is not a base dataset")));
        }
        if !seen.insert(d.clone()) {
            return Err(Error::InvalidPlan(format!("dataset `{d}` scanned twice")));
        }
        let mut a: Vec<String> = preds.iter().map(ToString::to_string).collect();
        let mut b: Vec<String> = q.predicates_of(&d).iter().map(ToString::to_string).collect();
        a.sort();
        b.sort();
        if a != b {
            return Err(Error::InvalidPlan(format!("scan of `{d}` applies [{}], query has [{}]", a.join(", "), b.join(", "))));
        }
    }
    if seen.len() != q.sources.len() {
        return Err(Error::InvalidPlan("plan does not cover every dataset".into()));
    }
    let expected: BTreeSet<_> =
        q.joins.iter().map(|j| (j.left.clone(), j.right.clone())).map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect();
    if key_set(plan) != expected {
        return Err(Error::InvalidPlan("plan join keys differ from the query's join predicates".into()));
    }
    Ok(())
}

/// Executes an explicit plan for `q` over base datasets.
pub fn run_with_plan(q: &Query, plan: &PlanNode, engine: &Engine, bindings: &Bindings) -> Result<(Vec<Row>, Execution)> {
    validate_plan(q, plan)?;
    execute_query(q, plan, engine, bindings)
}
