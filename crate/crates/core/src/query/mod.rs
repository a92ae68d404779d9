//! Conjunctive join queries `Q(projections, sources, joins, local predicates)`
//! and the structural rewrites the re-optimization loop applies to them.

mod parse;
mod rewrite;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::Value;

pub use parse::parse;
pub use rewrite::{datasets_with_pushable_predicates, filtered_source, joined_source, make_single_source_query, substitute_source};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub source: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(source: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { source: source.into(), column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.source, self.column)
    }
}

/// A column exposed by an intermediate source: its name there, the input
/// column it was copied from, and the base-dataset column it ultimately
/// derives from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedColumn {
    pub name: String,
    pub from: ColumnRef,
    pub origin: ColumnRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Base,
    Intermediate {
        origin: BTreeSet<String>,
        columns: Vec<DerivedColumn>,
        /// Whether any local predicate has been applied somewhere below.
        filtered: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSourceRef {
    pub name: String,
    #[serde(flatten)]
    pub kind: SourceKind,
}

impl DataSourceRef {
    pub fn base(name: impl Into<String>) -> Self {
        DataSourceRef { name: name.into(), kind: SourceKind::Base }
    }

    pub fn is_base(&self) -> bool {
        matches!(self.kind, SourceKind::Base)
    }

    /// Base datasets subsumed by this source (itself, for a base dataset).
    pub fn base_names(&self) -> BTreeSet<String> {
        match &self.kind {
            SourceKind::Base => BTreeSet::from([self.name.clone()]),
            SourceKind::Intermediate { origin, .. } => origin.clone(),
        }
    }

    pub fn derived_columns(&self) -> &[DerivedColumn] {
        match &self.kind {
            SourceKind::Base => &[],
            SourceKind::Intermediate { columns, .. } => columns,
        }
    }

    /// The base-dataset column behind `column` of this source.
    pub fn origin_of(&self, column: &str) -> Option<ColumnRef> {
        match &self.kind {
            SourceKind::Base => Some(ColumnRef::new(&self.name, column)),
            SourceKind::Intermediate { columns, .. } => columns.iter().find(|c| c.name == column).map(|c| c.origin.clone()),
        }
    }

    pub fn intermediate_filtered(&self) -> bool {
        matches!(self.kind, SourceKind::Intermediate { filtered: true, .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Predicate {
    Equals { column: ColumnRef, value: Value },
    Range { column: ColumnRef, lo: Bound<Value>, hi: Bound<Value> },
    Param { column: ColumnRef, op: CmpOp, param: String },
    Udf { source: String, name: String },
}

pub type Bindings = BTreeMap<String, Value>;

impl Predicate {
    pub fn compare(column: ColumnRef, op: CmpOp, value: Value) -> Self {
        match op {
            CmpOp::Eq => Predicate::Equals { column, value },
            CmpOp::Lt => Predicate::Range { column, lo: Bound::Unbounded, hi: Bound::Excluded(value) },
            CmpOp::Le => Predicate::Range { column, lo: Bound::Unbounded, hi: Bound::Included(value) },
            CmpOp::Gt => Predicate::Range { column, lo: Bound::Excluded(value), hi: Bound::Unbounded },
            CmpOp::Ge => Predicate::Range { column, lo: Bound::Included(value), hi: Bound::Unbounded },
        }
    }

    pub fn source(&self) -> &str {
        match self {
            Predicate::Equals { column, .. } | Predicate::Range { column, .. } | Predicate::Param { column, .. } => &column.source,
            Predicate::Udf { source, .. } => source,
        }
    }

    pub fn column(&self) -> Option<&ColumnRef> {
        match self {
            Predicate::Equals { column, .. } | Predicate::Range { column, .. } | Predicate::Param { column, .. } => Some(column),
            Predicate::Udf { .. } => None,
        }
    }

    /// Parameterized and UDF predicates have no usable selectivity estimate.
    pub fn is_complex(&self) -> bool {
        matches!(self, Predicate::Param { .. } | Predicate::Udf { .. })
    }

    /// Replaces a parameter with its bound value.
    pub fn bind(&self, bindings: &Bindings) -> Result<Predicate> {
        match self {
            Predicate::Param { column, op, param } => {
                let value = bindings.get(param).ok_or_else(|| Error::UnboundParameter(param.clone()))?;
                Ok(Predicate::compare(column.clone(), *op, value.clone()))
            }
            other => Ok(other.clone()),
        }
    }
}

fn fmt_bound_pair(f: &mut fmt::Formatter<'_>, c: &ColumnRef, lo: &Bound<Value>, hi: &Bound<Value>) -> fmt::Result {
    match (lo, hi) {
        (Bound::Included(l), Bound::Included(h)) => write!(f, "{c} BETWEEN {l} AND {h}"),
        (Bound::Unbounded, Bound::Unbounded) => write!(f, "{c} >= {}", i64::MIN),
        (lo, hi) => {
            let mut first = true;
            match lo {
                Bound::Included(l) => {
                    write!(f, "{c} >= {l}")?;
                    first = false;
                }
                Bound::Excluded(l) => {
                    write!(f, "{c} > {l}")?;
                    first = false;
                }
                Bound::Unbounded => {}
            }
            if !first && !matches!(hi, Bound::Unbounded) {
                f.write_str(" AND ")?;
            }
            match hi {
                Bound::Included(h) => write!(f, "{c} <= {h}"),
                Bound::Excluded(h) => write!(f, "{c} < {h}"),
                Bound::Unbounded => Ok(()),
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Equals { column, value } => write!(f, "{column} = {value}"),
            Predicate::Range { column, lo, hi } => fmt_bound_pair(f, column, lo, hi),
            Predicate::Param { column, op, param } => write!(f, "{column} {} ${param}", op.symbol()),
            Predicate::Udf { source, name } => write!(f, "{name}({source})"),
        }
    }
}

/// An equi-join conjunct. Canonical orientation puts the lexicographically
/// smaller source on the left, so `a.k = b.k` and `b.k = a.k` are equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinPredicate {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl JoinPredicate {
    pub fn new(a: ColumnRef, b: ColumnRef) -> Result<Self> {
        if a.source == b.source {
            return Err(Error::InvalidQuery(format!("join predicate {a} = {b} does not connect two distinct sources")));
        }
        Ok(if a.source < b.source { JoinPredicate { left: a, right: b } } else { JoinPredicate { left: b, right: a } })
    }

    pub fn connects(&self, x: &str, y: &str) -> bool {
        (self.left.source == x && self.right.source == y) || (self.left.source == y && self.right.source == x)
    }

    pub fn touches(&self, s: &str) -> bool {
        self.left.source == s || self.right.source == s
    }
}

impl fmt::Display for JoinPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

/// All join conjuncts between one pair of sources, treated as one
/// (possibly composite) join edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: String,
    pub right: String,
    /// `(left column, right column)` pairs.
    pub keys: Vec<(String, String)>,
}

impl JoinEdge {
    pub fn name(&self) -> String {
        format!("{}-{}", self.left, self.right)
    }

    pub fn other(&self, s: &str) -> &str {
        if self.left == s {
            &self.right
        } else {
            &self.left
        }
    }

    pub fn touches(&self, s: &str) -> bool {
        self.left == s || self.right == s
    }

    /// Key columns on the given side.
    pub fn columns_of(&self, side: &str) -> Vec<&str> {
        self.keys.iter().map(|(l, r)| if side == self.left { l.as_str() } else { r.as_str() }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub projections: Vec<ColumnRef>,
    pub sources: BTreeMap<String, DataSourceRef>,
    pub joins: Vec<JoinPredicate>,
    pub local_predicates: BTreeMap<String, Vec<Predicate>>,
}

impl Query {
    /// Builds a query and checks every structural invariant: references
    /// resolve, joins connect distinct sources, and the join graph is
    /// connected.
    pub fn new(
        projections: Vec<ColumnRef>,
        sources: impl IntoIterator<Item = DataSourceRef>,
        joins: impl IntoIterator<Item = JoinPredicate>,
        local_predicates: BTreeMap<String, Vec<Predicate>>,
    ) -> Result<Self> {
        let sources: BTreeMap<String, DataSourceRef> = sources.into_iter().map(|s| (s.name.clone(), s)).collect();
        let mut joins: Vec<JoinPredicate> = joins.into_iter().collect();
        joins.sort();
        joins.dedup();
        let local_predicates = local_predicates.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        let q = Query { projections, sources, joins, local_predicates };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidQuery("no sources".into()));
        }
        let searched = || self.sources.keys().cloned().collect::<Vec<_>>().join(", ");
        let check = |c: &ColumnRef| -> Result<()> {
            let Some(src) = self.sources.get(&c.source) else {
                return Err(Error::UnresolvedColumn { column: c.to_string(), searched: searched() });
            };
            if !src.is_base() && src.origin_of(&c.column).is_none() {
                return Err(Error::UnresolvedColumn { column: c.to_string(), searched: searched() });
            }
            Ok(())
        };
        for c in &self.projections {
            check(c)?;
        }
        for j in &self.joins {
            if j.left.source == j.right.source {
                return Err(Error::InvalidQuery(format!("self-join predicate {j}")));
            }
            check(&j.left)?;
            check(&j.right)?;
        }
        for (s, preds) in &self.local_predicates {
            if !self.sources.contains_key(s) {
                return Err(Error::UnresolvedColumn { column: format!("{s}.*"), searched: searched() });
            }
            for p in preds {
                if p.source() != s {
                    return Err(Error::InvalidQuery(format!("predicate {p} filed under `{s}`")));
                }
                if let Some(c) = p.column() {
                    check(c)?;
                }
            }
        }
        let components = self.components();
        if components.len() > 1 {
            return Err(Error::Disconnected(components));
        }
        Ok(())
    }

    /// Connected components of the join graph, each sorted.
    pub fn components(&self) -> Vec<Vec<String>> {
        let names: Vec<&String> = self.sources.keys().collect();
        let mut parent: BTreeMap<&str, &str> = names.iter().map(|n| (n.as_str(), n.as_str())).collect();
        fn find<'a>(p: &mut BTreeMap<&'a str, &'a str>, x: &'a str) -> &'a str {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p.insert(x, r);
            r
        }
        for j in &self.joins {
            if let (Some(a), Some(b)) = (self.sources.get_key_value(&j.left.source), self.sources.get_key_value(&j.right.source)) {
                let ra = find(&mut parent, a.0);
                let rb = find(&mut parent, b.0);
                if ra != rb {
                    parent.insert(ra.max(rb), ra.min(rb));
                }
            }
        }
        let mut groups: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for n in names {
            let r = find(&mut parent, n);
            groups.entry(r).or_default().push(n.clone());
        }
        groups.into_values().collect()
    }

    /// Join conjuncts grouped into one edge per source pair, sorted by name.
    pub fn edges(&self) -> Vec<JoinEdge> {
        let mut map: BTreeMap<(String, String), Vec<(String, String)>> = BTreeMap::new();
        for j in &self.joins {
            map.entry((j.left.source.clone(), j.right.source.clone())).or_default().push((j.left.column.clone(), j.right.column.clone()));
        }
        map.into_iter().map(|((left, right), keys)| JoinEdge { left, right, keys }).collect()
    }

    pub fn predicates_of(&self, source: &str) -> &[Predicate] {
        self.local_predicates.get(source).map_or(&[], Vec::as_slice)
    }

    pub fn parameters(&self) -> BTreeSet<String> {
        self.local_predicates
            .values()
            .flatten()
            .filter_map(|p| match p {
                Predicate::Param { param, .. } => Some(param.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn udfs(&self) -> BTreeSet<String> {
        self.local_predicates
            .values()
            .flatten()
            .filter_map(|p| match p {
                Predicate::Udf { name, .. } => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    /// Base datasets the query ranges over.
    pub fn base_datasets(&self) -> BTreeSet<String> {
        self.sources.values().flat_map(DataSourceRef::base_names).collect()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        for (i, c) in self.projections.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(" FROM ")?;
        for (i, s) in self.sources.keys().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(s)?;
        }
        let conjuncts: Vec<String> =
            self.joins.iter().map(ToString::to_string).chain(self.local_predicates.values().flatten().map(ToString::to_string)).collect();
        if !conjuncts.is_empty() {
            write!(f, " WHERE {}", conjuncts.join(" AND "))?;
        }
        Ok(())
    }
}
