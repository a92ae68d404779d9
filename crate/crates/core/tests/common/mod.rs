//! Random query instances and the independent oracles the integration tests
//! compare against: a nested-loop join evaluator and a brute-force argmin of
//! the join-size estimate over exact statistics.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use adaptjoin::baselines::{best_order, ingres_like, pairwise_join_sizes, pilot_run, static_cost_based, worst_order, PilotConfig};
use adaptjoin::catalog::{stats_on_load, Catalog, StatsConfig};
use adaptjoin::costmodel::CostConfig;
use adaptjoin::engine::{BuiltinUdf, Engine, EngineConfig};
use adaptjoin::optimizer::{run_dynamic, OptimizerConfig};
use adaptjoin::plan::{run_with_plan, PlanNode};
use adaptjoin::query::{parse, Bindings, Query};
use adaptjoin::{ColumnType, Row, Schema, Value};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const COLUMNS: [&str; 6] = ["id", "k0", "k1", "k2", "v", "s"];
const KEYS: [&str; 3] = ["k0", "k1", "k2"];

/// A local predicate in the oracle's own representation.
#[derive(Clone, Debug)]
pub enum Filter {
    Eq(usize, Value),
    Between(usize, i64, i64),
    Less(usize, i64),
    /// `id mod m == r`
    Modulo(i64, i64),
    Prefix(String),
}

impl Filter {
    pub fn holds(&self, row: &Row) -> bool {
        match self {
            Filter::Eq(c, v) => &row[*c] == v,
            Filter::Between(c, lo, hi) => row[*c].as_int().is_some_and(|x| (*lo..=*hi).contains(&x)),
            Filter::Less(c, x) => row[*c].as_int().is_some_and(|y| y < *x),
            Filter::Modulo(m, r) => row[0].as_int().is_some_and(|x| x.rem_euclid(*m) == *r),
            Filter::Prefix(p) => matches!(&row[5], Value::Str(s) if s.starts_with(p.as_str())),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Filter::Less(..) | Filter::Modulo(..) | Filter::Prefix(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct JoinPred {
    pub left: (String, usize),
    pub right: (String, usize),
}

pub struct Instance {
    pub tables: BTreeMap<String, (Schema, Vec<Row>)>,
    pub filters: BTreeMap<String, Vec<Filter>>,
    pub joins: Vec<JoinPred>,
    pub projections: Vec<(String, usize)>,
    pub text: String,
    pub query: Query,
    pub bindings: Bindings,
    pub udfs: Vec<(String, BuiltinUdf)>,
}

pub struct InstanceOptions {
    pub datasets: std::ops::RangeInclusive<usize>,
    pub max_rows: usize,
    /// Only predicate sets the dynamic strategy pushes down: none, several,
    /// or at least one complex predicate.
    pub pushable_only: bool,
    pub extra_edges: usize,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        InstanceOptions { datasets: 3..=6, max_rows: 2000, pushable_only: false, extra_edges: 2 }
    }
}

pub fn schema() -> Schema {
    use ColumnType::{Int, Str};
    Schema::new(vec![("id", Int), ("k0", Int), ("k1", Int), ("k2", Int), ("v", Int), ("s", Str)], "id").unwrap()
}

pub fn udfs() -> Vec<(String, BuiltinUdf)> {
    vec![
        ("third".into(), BuiltinUdf::Modulo { column: "id".into(), modulus: 3, remainder: 0 }),
        ("odd".into(), BuiltinUdf::Modulo { column: "id".into(), modulus: 2, remainder: 1 }),
        ("ones".into(), BuiltinUdf::Prefix { column: "s".into(), prefix: "s1".into() }),
    ]
}

fn random_filter(rng: &mut ChaCha8Rng, d: &str, i: usize, complex: bool, text: &mut Vec<String>, bindings: &mut Bindings) -> Filter {
    let kind = if complex { rng.random_range(2..5) } else { rng.random_range(0..5) };
    match kind {
        0 => {
            if rng.random_bool(0.5) {
                let c = rng.random_range(0..10);
                text.push(format!("{d}.v = {c}"));
                Filter::Eq(4, Value::Int(c))
            } else {
                let c = format!("s{}", rng.random_range(0..6));
                text.push(format!("{d}.s = \"{c}\""));
                Filter::Eq(5, Value::Str(c))
            }
        }
        1 => {
            let lo = rng.random_range(0..10);
            let hi = lo + rng.random_range(0..6);
            text.push(format!("{d}.v BETWEEN {lo} AND {hi}"));
            Filter::Between(4, lo, hi)
        }
        2 => {
            let p = format!("p{d}{i}");
            let x = rng.random_range(1..11);
            text.push(format!("{d}.v < ${p}"));
            bindings.insert(p, Value::Int(x));
            Filter::Less(4, x)
        }
        3 => {
            if rng.random_bool(0.5) {
                text.push(format!("third({d})"));
                Filter::Modulo(3, 0)
            } else {
                text.push(format!("odd({d})"));
                Filter::Modulo(2, 1)
            }
        }
        _ => {
            text.push(format!("ones({d})"));
            Filter::Prefix("s1".into())
        }
    }
}

fn build(rng: &mut ChaCha8Rng, opts: &InstanceOptions) -> Instance {
    let n = rng.random_range(opts.datasets.clone());
    let names: Vec<String> = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    let mut tables = BTreeMap::new();
    for d in &names {
        let rows = if rng.random_bool(0.15) {
            rng.random_range(opts.max_rows / 2..=opts.max_rows)
        } else if rng.random_bool(0.05) {
            rng.random_range(0..3)
        } else {
            rng.random_range(1..=opts.max_rows.min(300))
        };
        let domains: Vec<i64> = (0..3).map(|_| ((rows as i64) / [1, 2, 4, 8][rng.random_range(0..4)]).max(1)).collect();
        let data = (0..rows)
            .map(|i| {
                vec![
                    Value::Int(i as i64),
                    Value::Int(rng.random_range(0..domains[0])),
                    Value::Int(rng.random_range(0..domains[1])),
                    Value::Int(rng.random_range(0..domains[2])),
                    Value::Int(rng.random_range(0..10)),
                    Value::Str(format!("s{}", rng.random_range(0..6))),
                ]
            })
            .collect();
        tables.insert(d.clone(), (schema(), data));
    }

    let mut joins = BTreeSet::new();
    let mut edge = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        joins.insert(JoinPred {
            left: (names[a].clone(), 1 + rng.random_range(0..3)),
            right: (names[b].clone(), 1 + rng.random_range(0..3)),
        });
    };
    for i in 1..n {
        let j = rng.random_range(0..i);
        edge(rng, i, j);
    }
    for _ in 0..rng.random_range(0..=opts.extra_edges) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edge(rng, a, b);
        }
    }
    let joins: Vec<JoinPred> = joins.into_iter().collect();

    let mut conj: Vec<String> =
        joins.iter().map(|j| format!("{}.{} = {}.{}", j.left.0, COLUMNS[j.left.1], j.right.0, COLUMNS[j.right.1])).collect();
    let mut filters = BTreeMap::new();
    let mut bindings = Bindings::new();
    for d in &names {
        let count = match rng.random_range(0..10) {
            0..=3 => 0,
            4..=6 => 1,
            _ => 2,
        };
        let fs: Vec<Filter> =
            (0..count).map(|i| random_filter(rng, d, i, opts.pushable_only && count == 1, &mut conj, &mut bindings)).collect();
        filters.insert(d.clone(), fs);
    }
    let projections: Vec<(String, usize)> =
        (0..rng.random_range(1..=3)).map(|_| (names.choose(rng).unwrap().clone(), rng.random_range(0..COLUMNS.len()))).collect();
    let text = format!(
        "SELECT {} FROM {} WHERE {}",
        projections.iter().map(|(d, c)| format!("{d}.{}", COLUMNS[*c])).collect::<Vec<_>>().join(", "),
        names.join(", "),
        conj.join(" AND ")
    );
    let query = parse(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
    Instance { tables, filters, joins, projections, text, query, bindings, udfs: udfs() }
}

/// A random instance whose nested-loop evaluation stays within budget.
pub fn random_instance(seed: u64, opts: &InstanceOptions) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = build(&mut rng, opts);
        if nested_loop_partials(&inst, &inst.tables.keys().cloned().collect(), 4_000_000).is_some() {
            return inst;
        }
    }
}

impl Instance {
    pub fn load(&self, stats: &StatsConfig, partitions: usize) -> (Engine, Catalog) {
        let mut engine = Engine::new(EngineConfig { partitions, spill_dir: None }).unwrap();
        let mut catalog = Catalog::new(stats.clone()).unwrap();
        for (name, (schema, rows)) in &self.tables {
            engine.load_table(name, schema.clone(), rows.clone()).unwrap();
            let st = stats_on_load(name, schema, &engine.table(name).unwrap().relation.partitions, None, stats).unwrap();
            catalog.register_base(schema.clone(), st);
        }
        for (n, u) in &self.udfs {
            engine.udfs.register_builtin(n, u.clone());
        }
        (engine, catalog)
    }

    pub fn filtered(&self, d: &str) -> Vec<&Row> {
        let fs = &self.filters[d];
        self.tables[d].1.iter().filter(|r| fs.iter().all(|f| f.holds(r))).collect()
    }

    /// The oracle answer: projected rows, sorted.
    pub fn oracle(&self) -> Vec<Row> {
        let all: BTreeSet<String> = self.tables.keys().cloned().collect();
        let tuples = nested_loop(self, &all);
        let mut out: Vec<Row> = tuples.iter().map(|t| self.projections.iter().map(|(d, c)| t[d][*c].clone()).collect()).collect();
        out.sort();
        out
    }
}

type Tuple<'a> = BTreeMap<String, &'a Row>;

fn order(inst: &Instance, group: &BTreeSet<String>) -> Vec<String> {
    let mut out = vec![group.iter().next().unwrap().clone()];
    while out.len() < group.len() {
        let next = group
            .iter()
            .find(|d| {
                !out.contains(d)
                    && inst
                        .joins
                        .iter()
                        .any(|j| (&j.left.0 == *d && out.contains(&j.right.0)) || (&j.right.0 == *d && out.contains(&j.left.0)))
            })
            .expect("group is connected")
            .clone();
        out.push(next);
    }
    out
}

fn extend<'a>(inst: &'a Instance, partial: Vec<Tuple<'a>>, d: &str, rows: &[&'a Row]) -> Vec<Tuple<'a>> {
    let preds: Vec<&JoinPred> = inst
        .joins
        .iter()
        .filter(|j| {
            (j.left.0 == d && partial.first().is_some_and(|t| t.contains_key(&j.right.0)))
                || (j.right.0 == d && partial.first().is_some_and(|t| t.contains_key(&j.left.0)))
        })
        .collect();
    let mut out = Vec::new();
    for t in &partial {
        for r in rows {
            let ok = preds.iter().all(|j| {
                let (mine, theirs) = if j.left.0 == d { (&j.left, &j.right) } else { (&j.right, &j.left) };
                let a = &r[mine.1];
                let b = &t[&theirs.0][theirs.1];
                !a.is_null() && a == b
            });
            if ok {
                let mut t2 = t.clone();
                t2.insert(d.to_string(), *r);
                out.push(t2);
            }
        }
    }
    out
}

/// Every combination of filtered rows of `group` satisfying all join
/// predicates inside it. `group` must be connected.
pub fn nested_loop<'a>(inst: &'a Instance, group: &BTreeSet<String>) -> Vec<Tuple<'a>> {
    let ord = order(inst, group);
    let mut partial: Vec<Tuple> = inst.filtered(&ord[0]).into_iter().map(|r| Tuple::from([(ord[0].clone(), r)])).collect();
    for d in &ord[1..] {
        partial = extend(inst, partial, d, &inst.filtered(d));
    }
    partial
}

fn nested_loop_partials(inst: &Instance, group: &BTreeSet<String>, budget: usize) -> Option<()> {
    let ord = order(inst, group);
    let mut partial: Vec<Tuple> = inst.filtered(&ord[0]).into_iter().map(|r| Tuple::from([(ord[0].clone(), r)])).collect();
    for d in &ord[1..] {
        let rows = inst.filtered(d);
        if partial.len().saturating_mul(rows.len().max(1)) > budget {
            return None;
        }
        partial = extend(inst, partial, d, &rows);
    }
    Some(())
}

/// Exact rows and distinct counts of the join of `group`.
pub struct GroupStats {
    pub rows: f64,
    pub distinct: BTreeMap<(String, usize), f64>,
}

pub fn group_stats(inst: &Instance, group: &BTreeSet<String>) -> GroupStats {
    let tuples = nested_loop(inst, group);
    let mut distinct = BTreeMap::new();
    for j in &inst.joins {
        for side in [&j.left, &j.right] {
            if group.contains(&side.0) {
                let set: BTreeSet<&Value> = tuples.iter().map(|t| &t[&side.0][side.1]).filter(|v| !v.is_null()).collect();
                distinct.insert(side.clone(), set.len() as f64);
            }
        }
    }
    GroupStats { rows: tuples.len() as f64, distinct }
}

/// Join-size estimate between two groups from exact statistics: the row
/// product over the larger composite distinct count, where a composite key's
/// distinct count is the product of its columns' counts, at most the row
/// count and at least one for a non-empty input.
pub fn exact_estimate(inst: &Instance, a: &BTreeSet<String>, b: &BTreeSet<String>, sa: &GroupStats, sb: &GroupStats) -> Option<f64> {
    let preds: Vec<&JoinPred> = inst
        .joins
        .iter()
        .filter(|j| (a.contains(&j.left.0) && b.contains(&j.right.0)) || (b.contains(&j.left.0) && a.contains(&j.right.0)))
        .collect();
    if preds.is_empty() {
        return None;
    }
    let side_u = |g: &BTreeSet<String>, s: &GroupStats| {
        let mut u = 1.0;
        for j in &preds {
            let col = if g.contains(&j.left.0) { &j.left } else { &j.right };
            u *= s.distinct[col];
        }
        let u = f64::min(u, s.rows);
        if s.rows > 0.0 {
            u.max(1.0)
        } else {
            u
        }
    };
    if sa.rows == 0.0 || sb.rows == 0.0 {
        return Some(0.0);
    }
    Some(sa.rows * sb.rows / side_u(a, sa).max(side_u(b, sb)))
}

/// Brute-force minimum of the exact estimate over all pairs of `groups`
/// connected by at least one join predicate. Returns the minimum and the
/// pairs attaining it.
pub type GroupPair = (BTreeSet<String>, BTreeSet<String>);

pub fn argmin_oracle(inst: &Instance, groups: &[BTreeSet<String>]) -> (f64, Vec<GroupPair>) {
    let stats: Vec<GroupStats> = groups.iter().map(|g| group_stats(inst, g)).collect();
    let mut best = f64::INFINITY;
    let mut at = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            if let Some(e) = exact_estimate(inst, &groups[i], &groups[j], &stats[i], &stats[j]) {
                let close = (e - best).abs() <= 1e-9 * best.max(1.0);
                if close {
                    at.push((groups[i].clone(), groups[j].clone()));
                } else if e < best {
                    best = e;
                    at = vec![(groups[i].clone(), groups[j].clone())];
                }
            }
        }
    }
    (best, at)
}

/// Base datasets behind a source name produced by the optimizer for
/// single-letter datasets: `A`, `A'` or `I_ABC`.
pub fn datasets_of(name: &str) -> BTreeSet<String> {
    let stem = name.trim_end_matches('\'');
    let stem = stem.strip_prefix("I_").unwrap_or(stem);
    stem.chars().map(|c| c.to_string()).collect()
}

fn sorted(mut rows: Vec<Row>) -> Vec<Row> {
    rows.sort();
    rows
}

/// Every strategy's answer on `inst`, sorted, labelled by strategy.
pub fn all_answers(inst: &Instance, partitions: usize) -> Vec<(&'static str, Vec<Row>)> {
    let (engine, catalog) = inst.load(&StatsConfig::default(), partitions);
    let cfg = OptimizerConfig::default();
    let q = &inst.query;
    let b = &inst.bindings;
    let (dynamic, trace) = run_dynamic(q, &catalog, &engine, &cfg, b).unwrap();
    let static_plan = static_cost_based(q, &catalog, &cfg.cost).unwrap();
    let worst = worst_order(q, &pairwise_join_sizes(q, &engine, b).unwrap()).unwrap();
    let (pilot, _, _) = pilot_run(q, &catalog, &engine, &cfg.cost, &PilotConfig::default(), b).unwrap();
    let run = |p: &PlanNode| sorted(run_with_plan(q, p, &engine, b).unwrap().0);
    vec![
        ("dynamic", sorted(dynamic)),
        ("static_cost_based", run(&static_plan)),
        ("worst_order", run(&worst)),
        ("best_order", run(&best_order(&trace))),
        ("pilot_run", run(&pilot)),
        ("ingres_like", sorted(ingres_like(q, &catalog, &engine, &cfg, b).unwrap().0)),
    ]
}

pub fn exact_stats() -> (StatsConfig, CostConfig) {
    let stats = StatsConfig { exact_distinct: true, ..StatsConfig::default() };
    let cost = CostConfig { stats: stats.clone(), ..CostConfig::default() };
    (stats, cost)
}

/// Options for instances whose every re-optimization point sees exact
/// statistics: all filters are pushed down and measured.
pub fn greedy_options() -> InstanceOptions {
    InstanceOptions { datasets: 5..=6, pushable_only: true, extra_edges: 3, ..InstanceOptions::default() }
}

/// Runs the dynamic strategy with exact statistics and checks each
/// re-optimization choice against [`argmin_oracle`]. Returns the number of
/// choices checked.
pub fn check_greedy(inst: &Instance) -> Result<usize, String> {
    let (stats, cost) = exact_stats();
    let cfg = OptimizerConfig { cost, ..OptimizerConfig::default() };
    let (engine, catalog) = inst.load(&stats, 4);
    let (_, trace) = run_dynamic(&inst.query, &catalog, &engine, &cfg, &inst.bindings).map_err(|e| e.to_string())?;
    let mut groups: Vec<BTreeSet<String>> = inst.tables.keys().map(|d| BTreeSet::from([d.clone()])).collect();
    let mut checked = 0;
    for step in trace.reoptimizations() {
        let (best, at) = argmin_oracle(inst, &groups);
        let chosen = &step.joins[0];
        let (l, r) = (datasets_of(&chosen.edge.left), datasets_of(&chosen.edge.right));
        if (chosen.estimate - best).abs() > 1e-6 * best.max(1.0) {
            return Err(format!("planner estimate {} vs oracle minimum {best}", chosen.estimate));
        }
        if !at.iter().any(|(a, b)| (a == &l && b == &r) || (a == &r && b == &l)) {
            return Err(format!("chose {l:?} with {r:?}, oracle argmin {at:?}"));
        }
        groups.retain(|g| g != &l && g != &r);
        groups.push(l.union(&r).cloned().collect());
        checked += 1;
    }
    Ok(checked)
}
