//! End-to-end acceptance checks, one PASS/FAIL line per criterion. Runs
//! without the test harness so the lines are always printed.
mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use adaptjoin::baselines::{best_order, CardinalityModel};
use adaptjoin::optimizer::{first_join_of, run_dynamic, OptimizationTrace};
use adaptjoin::plan::run_with_plan;
use adaptjoin::sketches::{GkSketch, HllSketch};
use adaptjoin::workload::{builtin, load_workload, run_strategy, run_workload, LoadedWorkload, Strategy};
use adaptjoin::Value;
use common::{all_answers, check_greedy, greedy_options, random_instance, InstanceOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SF: f64 = 0.01;
const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Number, label, check and whether a failure fails the test.
type Criterion = (u32, &'static str, fn() -> Outcome, bool);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn load(name: &str) -> LoadedWorkload {
    load_workload(&builtin(name, SF, SEED).unwrap()).unwrap()
}

fn dynamic_trace(w: &LoadedWorkload) -> OptimizationTrace {
    let (qs, q) = &w.queries[0];
    run_dynamic(q, &w.catalog, &w.engine, &adaptjoin::workload::harness::optimizer_config(w), &qs.bindings).unwrap().1
}

fn report(w: &LoadedWorkload, s: Strategy, dynamic: Option<&OptimizationTrace>) -> adaptjoin::workload::StrategyReport {
    let (qs, q) = &w.queries[0];
    run_strategy(w, qs, q, s, dynamic).unwrap().1
}

fn strategies_agree_with_oracle() -> Outcome {
    let start = Instant::now();
    let opts = InstanceOptions::default();
    for seed in 0..200 {
        let inst = random_instance(50_000 + seed, &opts);
        let expected = inst.oracle();
        for (name, rows) in all_answers(&inst, 4) {
            if rows != expected {
                return outcome(false, format!("seed {seed}: {name} returned {} rows, oracle {}", rows.len(), expected.len()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(secs < 120.0, format!("200 instances, 6 strategies each, {secs:.1}s"))
}

fn greedy_is_argmin() -> Outcome {
    let mut instances = 0;
    let mut points = 0;
    let mut seed = 60_000;
    while instances < 100 {
        let inst = random_instance(seed, &greedy_options());
        seed += 1;
        match check_greedy(&inst) {
            Ok(n) => points += n,
            Err(e) => return outcome(false, format!("seed {}: {e}", seed - 1)),
        }
        instances += 1;
    }
    outcome(points > 0, format!("{instances} instances, {points} re-optimization points match the brute-force argmin"))
}

fn rank_error(s: &GkSketch, sorted: &[i64]) -> f64 {
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for k in 1..100 {
        let phi = k as f64 / 100.0;
        let v = s.quantile(phi).unwrap().as_int().unwrap();
        let lo = sorted.partition_point(|&x| x < v) as f64 + 1.0;
        let hi = sorted.partition_point(|&x| x <= v) as f64;
        let target = (phi * n).ceil();
        let err = if target < lo {
            lo - target
        } else if target > hi {
            target - hi
        } else {
            0.0
        };
        worst = worst.max(err);
    }
    worst
}

fn sketch(eps: f64, values: &[i64]) -> GkSketch {
    let mut s = GkSketch::new(eps).unwrap();
    for &v in values {
        s.insert(Value::Int(v));
    }
    s
}

fn sketches_within_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut notes = vec![];
    let mut pass = true;
    let streams: Vec<(&str, Vec<i64>)> = vec![
        ("uniform 1e6", (0..1_000_000).map(|_| rng.random_range(0..1_000_000_000)).collect()),
        ("ascending 1e5", (0..100_000).collect()),
        ("descending 1e5", (0..100_000).rev().collect()),
        ("few distinct 1e5", (0..100_000).map(|_| rng.random_range(0..20)).collect()),
    ];
    for eps in [0.01, 0.05] {
        for (label, stream) in &streams {
            let mut sorted = stream.clone();
            sorted.sort_unstable();
            let n = sorted.len() as f64;
            let single = rank_error(&sketch(eps, stream), &sorted) / n;
            let (a, b) = stream.split_at(stream.len() / 3);
            let merged = sketch(eps, a).merge(&sketch(eps, b)).unwrap();
            let merged = rank_error(&merged, &sorted) / n;
            if single > eps || merged > 2.0 * eps {
                pass = false;
                notes.push(format!("eps {eps} {label}: {single:.4}/{merged:.4}"));
            }
        }
    }
    let mut total = 0.0;
    for trial in 0..30u64 {
        let mut h = HllSketch::new(14).unwrap();
        for i in 0..10_000i64 {
            h.insert(&Value::Int(i * 7919 + (trial as i64) * 100_000_000));
        }
        total += (h.estimate() - 10_000.0).abs() / 10_000.0;
    }
    let hll = total / 30.0;
    pass &= hll <= 0.025;
    notes.push(format!("GK rank error within eps*n and 2*eps*n after merge; HLL mean relative error {:.2}%", hll * 100.0));
    outcome(pass, notes.join("; "))
}

fn correlated_filters() -> Outcome {
    let w = load("correlated-filters");
    let q = &w.queries[0].1;
    let cfg = adaptjoin::workload::harness::optimizer_config(&w);
    let model = CardinalityModel::from_catalog(q, &w.catalog, &cfg.cost).unwrap();
    let static_est = model.datasets["orders"].rows;
    let trace = dynamic_trace(&w);
    let measured = trace.pushdowns().find(|(d, _)| *d == "orders").map(|(_, n)| n as f64).unwrap_or(f64::NAN);
    let n = w.engine.table("orders").unwrap().relation.rows().count() as f64;
    let ratio = measured / static_est;
    let dynamic = report(&w, Strategy::Dynamic, None).counters.intermediate_tuples_total;
    let static_itt = report(&w, Strategy::StaticCostBased, None).counters.intermediate_tuples_total;
    let pass = (static_est / n - 0.01).abs() <= 0.002
        && (measured / n - 0.1).abs() <= 0.02
        && (8.0..=12.0).contains(&ratio)
        && dynamic < static_itt;
    outcome(
        pass,
        format!(
            "orders {n}: static estimate {static_est:.0}, measured {measured:.0} (ratio {ratio:.1}); intermediate tuples dynamic {dynamic} vs static {static_itt}"
        ),
    )
}

fn worst_order_gap() -> Outcome {
    let mut pass = true;
    let mut notes = vec![];
    for name in ["q17-analog", "q9-analog"] {
        let w = load(name);
        let dynamic = report(&w, Strategy::Dynamic, None).counters.intermediate_tuples_total;
        let worst = report(&w, Strategy::WorstOrder, None).counters.intermediate_tuples_total;
        pass &= worst >= 2 * dynamic;
        notes.push(format!("{name}: worst {worst} vs dynamic {dynamic}"));
    }
    outcome(pass, notes.join("; "))
}

fn index_join_on_intermediate() -> Outcome {
    let w = load("q50-analog");
    let mut notes = vec![];
    let mut pass = true;
    for (s, want) in
        [(Strategy::Dynamic, true), (Strategy::IngresLike, true), (Strategy::StaticCostBased, false), (Strategy::PilotRun, false)]
    {
        let r = report(&w, s, None);
        let has = r.plan.has_tag("i");
        pass &= has == want;
        notes.push(format!("{s}: {}", r.rendered));
    }
    outcome(pass, notes.join("; "))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

fn overhead_ratio() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut notes = vec![];
    for name in adaptjoin::workload::BUILTIN_NAMES {
        let w = load(name);
        let (qs, q) = &w.queries[0];
        let cfg = adaptjoin::workload::harness::optimizer_config(&w);
        let mut dyn_ms = vec![];
        let mut best_ms = vec![];
        for _ in 0..5 {
            let t = Instant::now();
            let (_, trace) = run_dynamic(q, &w.catalog, &w.engine, &cfg, &qs.bindings).unwrap();
            dyn_ms.push(t.elapsed().as_secs_f64() * 1e3);
            let plan = best_order(&trace);
            let t = Instant::now();
            run_with_plan(q, &plan, &w.engine, &qs.bindings).unwrap();
            best_ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let ratio = median(dyn_ms) / median(best_ms).max(1e-3);
        worst = worst.max(ratio);
        notes.push(format!("{name} {ratio:.2}"));
    }
    outcome(worst <= 1.5, format!("dynamic/best_order wall-clock (median of 5): {}", notes.join(", ")))
}

fn skewed_sampling() -> Outcome {
    let w = load("skewed-fact-join");
    let table = w.engine.table("fact1").unwrap();
    let k = table.schema.index_of("f1_k").unwrap();
    let exact = table.relation.rows().map(|r| r[k].clone()).collect::<BTreeSet<_>>().len() as f64;
    let hll = w.catalog.distinct("fact1", "f1_k").unwrap();
    let pilot = report(&w, Strategy::PilotRun, None);
    let pilot_u = pilot.pilot.as_ref().and_then(|p| p.get("fact1")).and_then(|s| s.distinct.get("f1_k")).copied().unwrap_or(f64::NAN);
    let hll_dev = (hll - exact).abs() / exact;
    let pilot_dev = (pilot_u - exact).abs() / exact;
    let trace = dynamic_trace(&w);
    let dyn_first = trace.first_join();
    let pilot_first = first_join_of(&pilot.plan);
    let pass = pilot_dev >= 2.0 * hll_dev && dyn_first != pilot_first;
    outcome(
        pass,
        format!(
            "U(fact1.f1_k) exact {exact}, HLL {hll:.0} ({:.1}%), pilot {pilot_u:.0} ({:.1}%); first join dynamic {dyn_first:?} vs pilot {pilot_first:?}",
            hll_dev * 100.0,
            pilot_dev * 100.0
        ),
    )
}

fn deterministic_reports() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        for name in ["q50-analog", "skewed-fact-join", "correlated-filters"] {
            let w = load(name);
            run_workload(&w).unwrap().write(&d.path().join(name), false).unwrap();
        }
    }
    let mut same = true;
    for name in ["q50-analog", "skewed-fact-join", "correlated-filters"] {
        let a = std::fs::read(dirs[0].path().join(name).join("combined.csv")).unwrap();
        let b = std::fs::read(dirs[1].path().join(name).join("combined.csv")).unwrap();
        same &= a == b;
    }
    outcome(same, "combined.csv identical across two runs of three workloads")
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "all strategies match the nested-loop oracle", strategies_agree_with_oracle, true),
        (2, "greedy choice is the estimate argmin", greedy_is_argmin, true),
        (3, "sketch error bounds", sketches_within_bounds, true),
        (4, "correlated filters", correlated_filters, true),
        (5, "worst order costs at least twice dynamic", worst_order_gap, true),
        (6, "index join on an intermediate result", index_join_on_intermediate, true),
        (7, "re-optimization overhead", overhead_ratio, false),
        (8, "pilot sampling under skew", skewed_sampling, true),
        (9, "deterministic reports", deterministic_reports, true),
    ];
    let mut failed = vec![];
    for (n, label, check, required) in criteria {
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if required { "" } else { " (reported, not enforced)" };
        println!("criterion {n}: {status} {label}{note}: {}", o.detail);
        if required && !o.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all enforced criteria pass");
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
