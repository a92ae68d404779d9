mod common;

use std::collections::BTreeSet;

use adaptjoin::catalog::{stats_on_load, Catalog, StatsConfig};
use adaptjoin::costmodel::JoinAlgorithm;
use adaptjoin::engine::{BuiltinUdf, Engine, EngineConfig};
use adaptjoin::optimizer::{run_dynamic, OptimizerConfig, TraceEvent};
use adaptjoin::planner::StepKind;
use adaptjoin::query::{parse, Bindings};
use adaptjoin::{ColumnType, Row, Schema, Value};
use common::{check_greedy, datasets_of, greedy_options, random_instance, InstanceOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Four datasets in a chain, two of them behind a UDF.
fn chain_example() -> (Engine, Catalog) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut engine = Engine::new(EngineConfig::default()).unwrap();
    let mut catalog = Catalog::new(StatsConfig::default()).unwrap();
    let specs: [(&str, [&str; 2], usize, [i64; 2]); 4] = [
        ("A", ["a", "b"], 2000, [100, 2000]),
        ("B", ["b", "c"], 4000, [2000, 4000]),
        ("C", ["c", "d"], 4000, [4000, 4000]),
        ("D", ["d", "e"], 4000, [4000, 10]),
    ];
    for (name, cols, rows, domains) in specs {
        let schema = Schema::new(vec![("id", ColumnType::Int), (cols[0], ColumnType::Int), (cols[1], ColumnType::Int)], "id").unwrap();
        let data: Vec<Row> = (0..rows as i64)
            .map(|i| vec![Value::Int(i), Value::Int(rng.random_range(0..domains[0])), Value::Int(rng.random_range(0..domains[1]))])
            .collect();
        engine.load_table(name, schema.clone(), data).unwrap();
        let st = stats_on_load(name, &schema, &engine.table(name).unwrap().relation.partitions, None, &catalog.config).unwrap();
        catalog.register_base(schema, st);
    }
    engine.udfs.register_builtin("udf", BuiltinUdf::Modulo { column: "id".into(), modulus: 10, remainder: 0 });
    engine.udfs.register_builtin("half", BuiltinUdf::Modulo { column: "id".into(), modulus: 2, remainder: 0 });
    (engine, catalog)
}

#[test]
fn chain_query_follows_the_expected_trace() {
    let (engine, catalog) = chain_example();
    let q = parse("SELECT A.a FROM A, B, C, D WHERE A.b = B.b AND B.c = C.c AND C.d = D.d AND udf(A) AND half(C)").unwrap();
    let (rows, trace) = run_dynamic(&q, &catalog, &engine, &OptimizerConfig::default(), &Bindings::new()).unwrap();

    let pushed: Vec<&str> = trace.pushdowns().map(|(d, _)| d).collect();
    assert_eq!(pushed, ["A", "C"]);
    let sizes: Vec<u64> = trace.pushdowns().map(|(_, n)| n).collect();
    assert_eq!(sizes, [200, 2000]);

    let steps: Vec<_> = trace.reoptimizations().collect();
    assert_eq!(steps.len(), 1);
    let chosen = &steps[0].joins[0];
    assert_eq!(datasets_of(&chosen.edge.left).union(&datasets_of(&chosen.edge.right)).cloned().collect::<BTreeSet<_>>(), set(&["A", "B"]));
    assert_eq!(steps[0].candidates.len(), 3);
    assert!(matches!(chosen.algorithm, JoinAlgorithm::Broadcast { .. }), "{:?}", chosen.algorithm);

    let last = trace.events.last().unwrap();
    let TraceEvent::Final { step: Some(step), .. } = last else { panic!("last event is {last:?}") };
    assert_eq!(step.kind, StepKind::TwoJoinTree);
    let inputs: BTreeSet<String> = step.joins.iter().flat_map(|j| [j.edge.left.clone(), j.edge.right.clone()]).collect();
    assert_eq!(inputs, set(&["I_AB", "C'", "D"]));
    // The smaller join runs first and feeds the other.
    assert_eq!(
        datasets_of(&step.joins[0].edge.left).union(&datasets_of(&step.joins[0].edge.right)).cloned().collect::<BTreeSet<_>>(),
        set(&["A", "B", "C"])
    );
    assert_eq!(trace.first_join(), Some(set(&["A", "B"])));
    assert_eq!(trace.plan.depth(), 3);
    assert!(trace.plan.render().ends_with("⋈b D)"), "{}", trace.plan);
    assert_eq!(rows.len() as u64, trace.joins.last().unwrap().actual);
}

#[test]
fn dynamic_matches_oracle_across_partitionings() {
    for seed in 0..40 {
        let inst = random_instance(seed, &InstanceOptions::default());
        let expected = inst.oracle();
        for partitions in [1, 3, 8] {
            let (engine, catalog) = inst.load(&StatsConfig::default(), partitions);
            let (mut rows, _) = run_dynamic(&inst.query, &catalog, &engine, &OptimizerConfig::default(), &inst.bindings).unwrap();
            rows.sort();
            assert_eq!(rows, expected, "seed {seed}, {partitions} partitions: {}", inst.text);
        }
    }
}

#[test]
fn spilled_materializations_give_the_same_answer() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 100..110 {
        let inst = random_instance(seed, &InstanceOptions::default());
        let (mut engine, catalog) = inst.load(&StatsConfig::default(), 4);
        let (mut in_memory, _) = run_dynamic(&inst.query, &catalog, &engine, &OptimizerConfig::default(), &inst.bindings).unwrap();
        let mut spilled_engine = Engine::new(EngineConfig { partitions: 4, spill_dir: Some(dir.path().to_path_buf()) }).unwrap();
        for (name, t) in engine.tables() {
            spilled_engine.load_table(name, t.schema.clone(), t.relation.rows().cloned().collect()).unwrap();
        }
        spilled_engine.udfs = std::mem::take(&mut engine.udfs);
        let (mut spilled, _) = run_dynamic(&inst.query, &catalog, &spilled_engine, &OptimizerConfig::default(), &inst.bindings).unwrap();
        in_memory.sort();
        spilled.sort();
        assert_eq!(in_memory, spilled, "seed {seed}");
    }
    drop(dir);
}

#[test]
fn greedy_choice_matches_brute_force_argmin() {
    let mut checked = 0;
    for seed in 0..30 {
        let inst = random_instance(1000 + seed, &greedy_options());
        checked += check_greedy(&inst).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
    assert!(checked >= 20, "only {checked} re-optimization points");
}

#[test]
fn single_plain_predicate_is_not_pushed_down() {
    let (engine, catalog) = chain_example();
    let q = parse("SELECT A.a FROM A, B, C, D WHERE A.b = B.b AND B.c = C.c AND C.d = D.d AND A.a = 3 AND C.c < 100 AND C.d < 50").unwrap();
    let (_, trace) = run_dynamic(&q, &catalog, &engine, &OptimizerConfig::default(), &Bindings::new()).unwrap();
    let pushed: Vec<&str> = trace.pushdowns().map(|(d, _)| d).collect();
    assert_eq!(pushed, ["C"]);
}

#[test]
fn statistics_skipping_only_changes_tracked_columns() {
    let (engine, catalog) = chain_example();
    let q = parse("SELECT A.a FROM A, B, C, D WHERE A.b = B.b AND B.c = C.c AND C.d = D.d AND udf(A) AND half(C)").unwrap();
    let run = |skip| {
        let cfg = OptimizerConfig { skip_last_stats: skip, ..OptimizerConfig::default() };
        run_dynamic(&q, &catalog, &engine, &cfg, &Bindings::new()).unwrap()
    };
    let (mut a, ta) = run(true);
    let (mut b, tb) = run(false);
    a.sort();
    b.sort();
    assert_eq!(a, b);
    let tracked = |t: &adaptjoin::optimizer::OptimizationTrace| -> Vec<usize> {
        t.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Materialization { tracked, .. } => Some(tracked.len()),
                _ => None,
            })
            .collect()
    };
    assert_eq!(tracked(&ta).last(), Some(&0));
    assert!(tracked(&tb).iter().all(|&n| n > 0));
}

#[test]
fn unbound_parameter_is_rejected_before_execution() {
    let (engine, catalog) = chain_example();
    let q = parse("SELECT A.a FROM A, B WHERE A.b = B.b AND A.a < $x").unwrap();
    let err = run_dynamic(&q, &catalog, &engine, &OptimizerConfig::default(), &Bindings::new()).unwrap_err();
    assert!(err.to_string().contains("$x"), "{err}");
}
