use std::collections::{BTreeMap, BTreeSet};

use super::{ColumnRef, DataSourceRef, DerivedColumn, JoinPredicate, Query, SourceKind};
use crate::error::{Error, Result};

/// Sources whose local predicates are pushed down and executed up front:
/// more than one predicate, or at least one parameterized/UDF predicate.
pub fn datasets_with_pushable_predicates(q: &Query) -> BTreeSet<String> {
    q.local_predicates.iter().filter(|(_, preds)| preds.len() > 1 || preds.iter().any(|p| p.is_complex())).map(|(s, _)| s.clone()).collect()
}

/// Columns of `group` still needed once `group` is collapsed into a single
/// source: projected columns and keys of joins leaving the group.
fn referenced_columns(q: &Query, group: &BTreeSet<String>) -> BTreeSet<ColumnRef> {
    let mut out: BTreeSet<ColumnRef> = q.projections.iter().filter(|c| group.contains(&c.source)).cloned().collect();
    for j in &q.joins {
        let l = group.contains(&j.left.source);
        let r = group.contains(&j.right.source);
        if l && !r {
            out.insert(j.left.clone());
        } else if r && !l {
            out.insert(j.right.clone());
        }
    }
    out
}

/// The select-project query that materializes `d` after its local
/// predicates, projecting exactly the columns the rest of `q` references.
pub fn make_single_source_query(q: &Query, d: &str) -> Result<Query> {
    let src = q.sources.get(d).ok_or_else(|| Error::UnknownSource(d.to_string()))?;
    let group = BTreeSet::from([d.to_string()]);
    let projections: Vec<ColumnRef> = referenced_columns(q, &group).into_iter().collect();
    let mut local = BTreeMap::new();
    local.insert(d.to_string(), q.predicates_of(d).to_vec());
    Query::new(projections, [src.clone()], [], local)
}

/// The intermediate source `d'` produced by executing `d`'s local predicates.
pub fn filtered_source(q: &Query, d: &str) -> Result<DataSourceRef> {
    let src = q.sources.get(d).ok_or_else(|| Error::UnknownSource(d.to_string()))?;
    let group = BTreeSet::from([d.to_string()]);
    let columns = referenced_columns(q, &group).into_iter().map(|c| derive(src, c.column.clone(), c)).collect::<Result<Vec<_>>>()?;
    Ok(DataSourceRef { name: format!("{d}'"), kind: SourceKind::Intermediate { origin: src.base_names(), columns, filtered: true } })
}

fn derive(src: &DataSourceRef, name: String, from: ColumnRef) -> Result<DerivedColumn> {
    let origin = src.origin_of(&from.column).ok_or_else(|| Error::UnknownColumn {
        source_name: src.name.clone(),
        column: from.column.clone(),
        candidates: src.derived_columns().iter().map(|c| c.name.clone()).collect::<Vec<_>>().join(", "),
    })?;
    Ok(DerivedColumn { name, from, origin })
}

/// Name of the result of joining sources covering `origin`: `I_AB` when
/// every base name is a single character, `I_orders_lineitem` otherwise.
pub fn intermediate_name(origin: &BTreeSet<String>) -> String {
    if origin.iter().all(|n| n.chars().count() == 1) {
        format!("I_{}", origin.iter().cloned().collect::<String>())
    } else {
        format!("I_{}", origin.iter().cloned().collect::<Vec<_>>().join("_"))
    }
}

/// The intermediate source produced by joining `x` and `y`. Columns keep
/// their name when unambiguous and are prefixed with their input source
/// name (`B_c`) when two inputs expose the same name.
pub fn joined_source(q: &Query, x: &str, y: &str) -> Result<DataSourceRef> {
    let sx = q.sources.get(x).ok_or_else(|| Error::UnknownSource(x.to_string()))?;
    let sy = q.sources.get(y).ok_or_else(|| Error::UnknownSource(y.to_string()))?;
    let group = BTreeSet::from([x.to_string(), y.to_string()]);
    let refs = referenced_columns(q, &group);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &refs {
        *counts.entry(c.column.as_str()).or_default() += 1;
    }
    let columns = refs
        .iter()
        .map(|c| {
            let name = if counts[c.column.as_str()] > 1 { format!("{}_{}", c.source, c.column) } else { c.column.clone() };
            let src = if c.source == x { sx } else { sy };
            derive(src, name, c.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let origin: BTreeSet<String> = sx.base_names().into_iter().chain(sy.base_names()).collect();
    let filtered =
        sx.intermediate_filtered() || sy.intermediate_filtered() || !q.predicates_of(x).is_empty() || !q.predicates_of(y).is_empty();
    Ok(DataSourceRef { name: intermediate_name(&origin), kind: SourceKind::Intermediate { origin, columns, filtered } })
}

/// Replaces `removed` by `replacement`: references are remapped through the
/// replacement's derived columns, joins internal to `removed` and the local
/// predicates of `removed` (already applied by the replacement) are dropped.
pub fn substitute_source(q: &Query, removed: &BTreeSet<String>, replacement: DataSourceRef) -> Result<Query> {
    for r in removed {
        if !q.sources.contains_key(r) {
            return Err(Error::UnknownSource(r.clone()));
        }
    }
    if q.sources.contains_key(&replacement.name) && !removed.contains(&replacement.name) {
        return Err(Error::InvalidQuery(format!("replacement `{}` collides with an existing source", replacement.name)));
    }
    let remap = |c: &ColumnRef| -> Result<ColumnRef> {
        if !removed.contains(&c.source) {
            return Ok(c.clone());
        }
        match &replacement.kind {
            SourceKind::Base => Ok(ColumnRef::new(&replacement.name, &c.column)),
            SourceKind::Intermediate { columns, .. } => columns
                .iter()
                .find(|d| &d.from == c)
                .map(|d| ColumnRef::new(&replacement.name, &d.name))
                .ok_or_else(|| Error::MissingColumn { replacement: replacement.name.clone(), column: c.to_string() }),
        }
    };
    let projections = q.projections.iter().map(remap).collect::<Result<Vec<_>>>()?;
    let mut joins = Vec::new();
    for j in &q.joins {
        if removed.contains(&j.left.source) && removed.contains(&j.right.source) {
            continue;
        }
        joins.push(JoinPredicate::new(remap(&j.left)?, remap(&j.right)?)?);
    }
    let local = q.local_predicates.iter().filter(|(s, _)| !removed.contains(*s)).map(|(s, p)| (s.clone(), p.clone())).collect();
    let sources = q.sources.values().filter(|s| !removed.contains(&s.name)).cloned().chain(std::iter::once(replacement));
    Query::new(projections, sources, joins, local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;

    const Q1: &str = "SELECT A.a FROM A, B, C, D WHERE udf(A) AND A.b = B.b AND udf(C) AND B.c = C.c AND B.d = D.d";

    fn q1_prime() -> Query {
        let q = parse(Q1).unwrap();
        let a = filtered_source(&q, "A").unwrap();
        let q = substitute_source(&q, &BTreeSet::from(["A".into()]), a).unwrap();
        let c = filtered_source(&q, "C").unwrap();
        substitute_source(&q, &BTreeSet::from(["C".into()]), c).unwrap()
    }

    #[test]
    fn pushable_sources_of_q1() {
        let q = parse(Q1).unwrap();
        assert_eq!(datasets_with_pushable_predicates(&q), BTreeSet::from(["A".to_string(), "C".to_string()]));
    }

    #[test]
    fn single_fixed_predicate_not_pushed() {
        let q = parse("SELECT A.a FROM A, B WHERE A.k = B.k AND A.a = 3").unwrap();
        assert!(datasets_with_pushable_predicates(&q).is_empty());
        let q = parse("SELECT A.a FROM A, B WHERE A.k = B.k AND A.a = 3 AND A.b < 2").unwrap();
        assert_eq!(datasets_with_pushable_predicates(&q).len(), 1);
        let q = parse("SELECT A.a FROM A, B WHERE A.k = B.k").unwrap();
        assert!(datasets_with_pushable_predicates(&q).is_empty());
    }

    #[test]
    fn single_source_queries_of_q1() {
        let q = parse(Q1).unwrap();
        assert_eq!(make_single_source_query(&q, "A").unwrap().to_string(), "SELECT A.a, A.b FROM A WHERE udf(A)");
        assert_eq!(make_single_source_query(&q, "C").unwrap().to_string(), "SELECT C.c FROM C WHERE udf(C)");
    }

    #[test]
    fn join_key_only_projection() {
        let q = parse("SELECT B.x FROM A, B WHERE A.k = B.k AND f(A)").unwrap();
        let sq = make_single_source_query(&q, "A").unwrap();
        assert_eq!(sq.projections, vec![ColumnRef::new("A", "k")]);
    }

    #[test]
    fn push_down_rewrite_renames_endpoints() {
        let q = q1_prime();
        assert_eq!(q.to_string(), "SELECT A'.a FROM A', B, C', D WHERE A'.b = B.b AND B.c = C'.c AND B.d = D.d");
        assert!(q.local_predicates.is_empty());
    }

    #[test]
    fn reconstruction_after_first_join() {
        let q = q1_prime();
        let iab = joined_source(&q, "A'", "B").unwrap();
        assert_eq!(iab.name, "I_AB");
        let q4 = substitute_source(&q, &BTreeSet::from(["A'".into(), "B".into()]), iab).unwrap();
        assert_eq!(q4.to_string(), "SELECT I_AB.a FROM C', D, I_AB WHERE C'.c = I_AB.c AND D.d = I_AB.d");
        assert_eq!(q4.joins.len(), 2);
        let origin = q4.sources["I_AB"].origin_of("c").unwrap();
        assert_eq!(origin, ColumnRef::new("B", "c"));
    }

    #[test]
    fn ambiguous_columns_are_prefixed() {
        let q = parse("SELECT A.k FROM A, B, C WHERE A.k = B.k AND B.x = C.x AND A.x = C.y").unwrap();
        let ab = joined_source(&q, "A", "B").unwrap();
        let names: Vec<&str> = ab.derived_columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["k", "A_x", "B_x"]);
        let q2 = substitute_source(&q, &BTreeSet::from(["A".into(), "B".into()]), ab).unwrap();
        // both remaining conjuncts now connect I_AB and C: one composite edge
        assert_eq!(q2.edges().len(), 1);
        assert_eq!(q2.edges()[0].keys.len(), 2);
    }

    #[test]
    fn missing_column_rejected() {
        let q = q1_prime();
        let bad = DataSourceRef {
            name: "I_AB".into(),
            kind: SourceKind::Intermediate { origin: BTreeSet::from(["A".into(), "B".into()]), columns: vec![], filtered: false },
        };
        let err = substitute_source(&q, &BTreeSet::from(["A'".into(), "B".into()]), bad).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { .. }), "{err}");
    }

    #[test]
    fn removing_unknown_source_rejected() {
        let q = q1_prime();
        let x = joined_source(&q, "A'", "B").unwrap();
        let err = substitute_source(&q, &BTreeSet::from(["Z".into()]), x).unwrap_err();
        assert!(matches!(err, Error::UnknownSource(_)));
    }
}
