use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::catalog::stats_on_load;
use crate::value::ColumnType;

fn schema() -> Schema {
    Schema::new(vec![("id", ColumnType::Int), ("k", ColumnType::Int), ("v", ColumnType::Int)], "id").unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, keys: i64) -> Vec<Row> {
    (0..n)
        .map(|i| {
            let k = if rng.random_bool(0.05) { Value::Null } else { Value::Int(rng.random_range(0..keys)) };
            vec![Value::Int(i as i64), k, Value::Int(rng.random_range(0..100))]
        })
        .collect()
}

fn engine(partitions: usize, a: Vec<Row>, b: Vec<Row>) -> Engine {
    let mut e = Engine::new(EngineConfig { partitions, spill_dir: None }).unwrap();
    e.load_table("A", schema(), a).unwrap();
    e.load_table("B", schema(), b).unwrap();
    e.create_index("B", "k").unwrap();
    e
}

fn oracle(a: &[Row], b: &[Row]) -> Vec<Row> {
    let mut out = Vec::new();
    for l in a {
        for r in b {
            if !l[1].is_null() && l[1] == r[1] {
                out.push(l.iter().chain(r.iter()).cloned().collect());
            }
        }
    }
    out.sort();
    out
}

fn sorted(rel: Relation) -> Vec<Row> {
    let mut rows = rel.into_rows();
    rows.sort();
    rows
}

const ALL: [usize; 6] = [0, 1, 2, 3, 4, 5];

fn run_all(e: &Engine) -> Vec<Vec<Row>> {
    let scan = |d| e.scan_filter(d, &[], None).unwrap().0;
    let mut out = Vec::new();
    for mode in [JoinMode::Hash, JoinMode::BroadcastLeft, JoinMode::BroadcastRight] {
        out.push(sorted(e.join(scan("A"), scan("B"), &[(1, 1)], mode, &ALL).unwrap().0));
    }
    out.push(sorted(e.inl_join(scan("A"), "B", &[(1, "k".into())], &[], true, &ALL).unwrap().0));
    out
}

#[test]
fn algorithms_agree_with_nested_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = random_rows(&mut rng, 300, 40);
        let b = random_rows(&mut rng, 150, 40);
        let expected = oracle(&a, &b);
        let e = engine(4, a, b);
        for got in run_all(&e) {
            assert_eq!(got, expected);
        }
    }
}

#[test]
fn large_random_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_rows(&mut rng, 1000, 200);
    let b = random_rows(&mut rng, 500, 200);
    let expected = oracle(&a, &b);
    assert_eq!(run_all(&engine(4, a, b))[0], expected);
}

#[test]
fn partition_count_does_not_change_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_rows(&mut rng, 200, 20);
    let b = random_rows(&mut rng, 200, 20);
    let expected = oracle(&a, &b);
    for p in [1, 2, 4, 8] {
        for got in run_all(&engine(p, a.clone(), b.clone())) {
            assert_eq!(got, expected);
        }
    }
}

#[test]
fn self_join_on_primary_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_rows(&mut rng, 500, 10);
    let e = engine(4, a.clone(), a);
    let scan = |d| e.scan_filter(d, &[], None).unwrap().0;
    let (rel, c) = e.join(scan("A"), scan("B"), &[(0, 0)], JoinMode::Hash, &ALL).unwrap();
    assert_eq!(rel.len(), 500);
    // both inputs are already partitioned on their primary key
    assert_eq!(c.tuples_shuffled, 0);
}

#[test]
fn no_matches_and_empty_inputs() {
    let a: Vec<Row> = (0..10).map(|i| vec![Value::Int(i), Value::Int(i), Value::Int(0)]).collect();
    let b: Vec<Row> = (0..10).map(|i| vec![Value::Int(i), Value::Int(i + 100), Value::Int(0)]).collect();
    let e = engine(4, a, b);
    assert!(run_all(&e).iter().all(Vec::is_empty));
    let e = engine(4, vec![], vec![]);
    let (rel, c) = e.inl_join(e.scan_filter("A", &[], None).unwrap().0, "B", &[(1, "k".into())], &[], true, &ALL).unwrap();
    assert!(rel.is_empty());
    assert_eq!(c.index_lookups, 0);
}

#[test]
fn shuffle_accounting() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_rows(&mut rng, 100, 10);
    let b = random_rows(&mut rng, 60, 10);
    let e = engine(4, a, b);
    let scan = |d| e.scan_filter(d, &[], None).unwrap().0;
    let small = scan("B");
    let bytes = small.byte_size();
    let (_, c) = e.join(scan("A"), small, &[(1, 1)], JoinMode::BroadcastRight, &ALL).unwrap();
    assert_eq!(c.tuples_shuffled, 60 * 4);
    assert_eq!(c.bytes_shuffled, bytes * 4);
    let (_, c) = e.join(scan("A"), scan("B"), &[(1, 1)], JoinMode::Hash, &ALL).unwrap();
    assert_eq!(c.tuples_shuffled, 160);
    let (_, c) = e.inl_join(scan("A"), "B", &[(1, "k".into())], &[], true, &ALL).unwrap();
    assert_eq!(c.index_lookups, 100 * 4);
    let (_, c) = e.scan_filter("A", &[], None).unwrap();
    assert_eq!(c.tuples_scanned, 100);
}

#[test]
fn inl_requires_base_and_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = engine(2, random_rows(&mut rng, 10, 3), random_rows(&mut rng, 10, 3));
    let scan = |d| e.scan_filter(d, &[], None).unwrap().0;
    let err = e.inl_join(scan("B"), "A", &[(1, "k".into())], &[], true, &ALL).unwrap_err();
    assert!(matches!(err, Error::MissingIndex { .. }));
    let err = e.inl_join(scan("A"), "I_AB", &[(1, "k".into())], &[], true, &ALL).unwrap_err();
    assert!(matches!(err, Error::NotBaseDataset(_)));
}

#[test]
fn inl_applies_indexed_side_predicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_rows(&mut rng, 100, 10);
    let b = random_rows(&mut rng, 100, 10);
    let e = engine(4, a.clone(), b.clone());
    let pred = Predicate::compare(ColumnRef::new("B", "v"), crate::query::CmpOp::Lt, Value::Int(50));
    let (rel, _) = e.inl_join(e.scan_filter("A", &[], None).unwrap().0, "B", &[(1, "k".into())], &[pred], true, &ALL).unwrap();
    let b_f: Vec<Row> = b.into_iter().filter(|r| r[2] < Value::Int(50)).collect();
    assert_eq!(sorted(rel), oracle(&a, &b_f));
}

#[test]
fn type_mismatch_rejected() {
    let mut e = Engine::new(EngineConfig::default()).unwrap();
    e.load_table("A", schema(), vec![]).unwrap();
    let s = Schema::new(vec![("id", ColumnType::Int), ("k", ColumnType::Str)], "id").unwrap();
    e.load_table("S", s, vec![]).unwrap();
    let a = e.scan_filter("A", &[], None).unwrap().0;
    let b = e.scan_filter("S", &[], None).unwrap().0;
    assert!(matches!(e.join(a, b, &[(1, 1)], JoinMode::Hash, &[0]), Err(Error::TypeMismatch(_))));
}

#[test]
fn scan_filter_exact_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_rows(&mut rng, 2000, 50);
    let e = engine(4, a.clone(), vec![]);
    let preds = vec![
        Predicate::compare(ColumnRef::new("A", "v"), crate::query::CmpOp::Lt, Value::Int(30)),
        Predicate::compare(ColumnRef::new("A", "k"), crate::query::CmpOp::Ge, Value::Int(10)),
    ];
    let (rel, _) = e.scan_filter("A", &preds, Some(&["k".to_string()])).unwrap();
    let (m, _) = e.sink(rel, "A'", &["k".into()], &StatsConfig::default()).unwrap();
    let expected = a.iter().filter(|r| r[2] < Value::Int(30) && !r[1].is_null() && r[1] >= Value::Int(10)).count();
    assert_eq!(m.stats.row_count, expected as u64);
}

#[test]
fn always_false_udf_gives_empty_result() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut e = engine(4, random_rows(&mut rng, 50, 5), vec![]);
    e.udfs.register("never", |_, _| false);
    let p = Predicate::Udf { source: "A".into(), name: "never".into() };
    let (rel, _) = e.scan_filter("A", &[p], None).unwrap();
    let (m, c) = e.sink(rel, "A'", &["k".into()], &StatsConfig::default()).unwrap();
    assert_eq!(m.stats.row_count, 0);
    assert_eq!(c.tuples_materialized, 0);
    assert_eq!(m.stats.columns["k"].distinct(), 0.0);
}

#[test]
fn unbound_parameter_and_unknown_udf() {
    let e = engine(1, vec![], vec![]);
    let p = Predicate::Param { column: ColumnRef::new("A", "k"), op: crate::query::CmpOp::Eq, param: "x".into() };
    assert!(matches!(e.scan_filter("A", &[p], None), Err(Error::UnboundParameter(_))));
    let u = Predicate::Udf { source: "A".into(), name: "nope".into() };
    assert!(matches!(e.scan_filter("A", &[u], None), Err(Error::UnknownUdf(_))));
}

#[test]
fn sink_reader_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows = random_rows(&mut rng, 300, 30);
    let mut e = Engine::new(EngineConfig { partitions: 3, spill_dir: Some(dir.path().to_path_buf()) }).unwrap();
    e.load_table("A", schema(), rows.clone()).unwrap();
    let (rel, _) = e.scan_filter("A", &[], None).unwrap();
    let original = rel.clone();
    let cfg = StatsConfig::default();
    let (m, c) = e.sink(rel, "I_A", &["k".into(), "v".into()], &cfg).unwrap();
    assert_eq!(c.tuples_materialized, 300);
    let back = e.reader("I_A").unwrap();
    assert_eq!(back.partitions, original.partitions);
    assert_eq!(back.fields, original.fields);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_some());
    let loaded = stats_on_load("I_A", &schema(), &original.partitions, Some(&["k".into(), "v".into()]), &cfg).unwrap();
    assert_eq!(m.stats, loaded);
    assert!(matches!(e.reader("nope"), Err(Error::UnknownSource(_))));
    drop(e);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn sink_empty_stream() {
    let e = engine(2, vec![], vec![]);
    let (rel, _) = e.scan_filter("A", &[], None).unwrap();
    let (m, _) = e.sink(rel, "E", &[], &StatsConfig::default()).unwrap();
    assert_eq!(m.stats.row_count, 0);
    assert!(e.reader("E").unwrap().is_empty());
}

#[test]
fn deterministic_counters() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let e = engine(4, random_rows(&mut rng, 400, 30), random_rows(&mut rng, 300, 30));
        let scan = |d| e.scan_filter(d, &[], None).unwrap().0;
        let (r, c) = e.join(scan("A"), scan("B"), &[(1, 1)], JoinMode::Hash, &ALL).unwrap();
        (r.partitions, c)
    };
    assert_eq!(run(), run());
}

#[test]
fn counters_add() {
    let a = CostCounters { tuples_scanned: 1, index_lookups: 2, ..Default::default() };
    let b = CostCounters { tuples_scanned: 3, tuples_shuffled: 4, ..Default::default() };
    let s: CostCounters = [a, b].into_iter().sum();
    assert_eq!(s.tuples_scanned, 4);
    assert_eq!(s.tuples_shuffled, 4);
    assert_eq!(s.index_lookups, 2);
}
