//! Named workloads shaped after well-known decision-support queries: the
//! same join topology and predicate classes at desk scale.

use std::collections::BTreeMap;

use super::generator::{Family, GeneratorSpec, RETURN_WINDOW_START, TPCH_ORDER_DAYS};
use super::spec::{DataSpec, IndexSpec, QuerySpec, RunConfig, Strategy, WorkloadSpec};
use crate::engine::BuiltinUdf;
use crate::error::{Error, Result};
use crate::value::Value;

pub const BUILTIN_NAMES: [&str; 7] =
    ["q1-analog", "q8-analog", "q9-analog", "q17-analog", "q50-analog", "correlated-filters", "skewed-fact-join"];

pub fn builtin_names() -> &'static [&'static str] {
    &BUILTIN_NAMES
}

fn generated(family: Family, sf: f64, zipf: f64, correlation: f64, tables: &[&str], aliases: &[(&str, &str)]) -> DataSpec {
    DataSpec::Generated {
        generator: GeneratorSpec { family, scale_factor: sf, zipf, correlation },
        aliases: aliases.iter().map(|(a, t)| (a.to_string(), t.to_string())).collect(),
        tables: Some(tables.iter().map(|t| t.to_string()).collect()),
    }
}

fn query(name: &str, text: &str, bindings: &[(&str, i64)]) -> QuerySpec {
    QuerySpec {
        name: name.to_string(),
        text: text.split_whitespace().collect::<Vec<_>>().join(" "),
        bindings: bindings.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect(),
    }
}

fn workload(name: &str, seed: u64, data: DataSpec, queries: Vec<QuerySpec>) -> WorkloadSpec {
    WorkloadSpec {
        name: name.to_string(),
        seed,
        data,
        indexes: vec![],
        udfs: BTreeMap::new(),
        queries,
        strategies: Strategy::ALL.to_vec(),
        config: RunConfig::default(),
    }
}

/// Builds the named workload at scale factor `sf`.
pub fn builtin(name: &str, sf: f64, seed: u64) -> Result<WorkloadSpec> {
    let spec = match name {
        // Four datasets, two of them filtered, in a chain with a branch.
        "q1-analog" => workload(
            name,
            seed,
            generated(Family::Tpch, sf, 0.0, 0.0, &["orders", "lineitem", "customer", "part"], &[]),
            vec![query(
                name,
                "SELECT customer.c_mktsegment, part.p_size
                 FROM orders, lineitem, customer, part
                 WHERE orders.o_orderkey = lineitem.l_orderkey
                   AND orders.o_custkey = customer.c_custkey
                   AND lineitem.l_partkey = part.p_partkey
                   AND orders.o_priority = 1 AND orders.o_orderdate < 1200
                   AND customer.c_mktsegment = \"BUILDING\" AND customer.c_acctbal > $bal",
                &[("bal", 0)],
            )],
        ),
        "q8-analog" => workload(
            name,
            seed,
            generated(
                Family::Tpch,
                sf,
                0.0,
                0.0,
                &["part", "supplier", "lineitem", "orders", "customer", "region"],
                &[("n1", "nation"), ("n2", "nation")],
            ),
            vec![query(
                name,
                "SELECT n2.n_name, orders.o_orderdate
                 FROM part, supplier, lineitem, orders, customer, n1, n2, region
                 WHERE part.p_partkey = lineitem.l_partkey
                   AND supplier.s_suppkey = lineitem.l_suppkey
                   AND lineitem.l_orderkey = orders.o_orderkey
                   AND orders.o_custkey = customer.c_custkey
                   AND customer.c_nationkey = n1.n_nationkey
                   AND n1.n_regionkey = region.r_regionkey
                   AND supplier.s_nationkey = n2.n_nationkey
                   AND region.r_name = \"AMERICA\"
                   AND orders.o_orderdate BETWEEN 1000 AND 1730
                   AND part.p_type = \"ECONOMY ANODIZED STEEL\"",
                &[],
            )],
        ),
        "q9-analog" => {
            let mut w = workload(
                name,
                seed,
                generated(Family::Tpch, sf, 0.0, 0.0, &["part", "supplier", "lineitem", "partsupp", "orders", "nation"], &[]),
                vec![query(
                    name,
                    "SELECT nation.n_name, orders.o_orderdate, partsupp.ps_supplycost
                     FROM part, supplier, lineitem, partsupp, orders, nation
                     WHERE supplier.s_suppkey = lineitem.l_suppkey
                       AND partsupp.ps_suppkey = lineitem.l_suppkey
                       AND partsupp.ps_partkey = lineitem.l_partkey
                       AND part.p_partkey = lineitem.l_partkey
                       AND orders.o_orderkey = lineitem.l_orderkey
                       AND supplier.s_nationkey = nation.n_nationkey
                       AND green(part) AND recent(orders)",
                    &[],
                )],
            );
            w.udfs.insert("green".into(), BuiltinUdf::Prefix { column: "p_color".into(), prefix: "green".into() });
            w.udfs.insert(
                "recent".into(),
                BuiltinUdf::RangeNoise {
                    column: "o_orderdate".into(),
                    lo: TPCH_ORDER_DAYS - 365,
                    hi: TPCH_ORDER_DAYS - 1,
                    noise: 0.2,
                    seed: 17,
                },
            );
            w
        }
        "q17-analog" => workload(
            name,
            seed,
            generated(
                Family::Tpcds,
                sf,
                0.0,
                0.0,
                &["store_sales", "store_returns", "catalog_sales", "store", "item"],
                &[("d1", "date_dim"), ("d2", "date_dim"), ("d3", "date_dim")],
            ),
            vec![query(
                name,
                "SELECT item.i_brand, store.s_state, store_sales.ss_quantity
                 FROM store_sales, store_returns, catalog_sales, d1, d2, d3, store, item
                 WHERE store_sales.ss_ticket_number = store_returns.sr_ticket_number
                   AND store_sales.ss_item_sk = store_returns.sr_item_sk
                   AND store_sales.ss_customer_sk = store_returns.sr_customer_sk
                   AND store_returns.sr_customer_sk = catalog_sales.cs_bill_customer_sk
                   AND store_returns.sr_item_sk = catalog_sales.cs_item_sk
                   AND store_sales.ss_sold_date_sk = d1.d_date_sk
                   AND store_returns.sr_returned_date_sk = d2.d_date_sk
                   AND catalog_sales.cs_sold_date_sk = d3.d_date_sk
                   AND store_sales.ss_store_sk = store.s_store_sk
                   AND store_sales.ss_item_sk = item.i_item_sk
                   AND d1.d_moy = 4 AND d1.d_year = 2001
                   AND d2.d_moy BETWEEN 4 AND 10 AND d2.d_year = 2001
                   AND d3.d_moy BETWEEN 4 AND 10 AND d3.d_year = 2001",
                &[],
            )],
        ),
        "q50-analog" => {
            let mut w = workload(
                name,
                seed,
                generated(
                    Family::Tpcds,
                    sf,
                    0.0,
                    0.0,
                    &["store_sales", "store_returns", "store"],
                    &[("d1", "date_dim"), ("d2", "date_dim")],
                ),
                vec![query(
                    name,
                    "SELECT store.s_store_name, store_sales.ss_quantity, store_returns.sr_return_quantity
                     FROM store_sales, store_returns, store, d1, d2
                     WHERE store_sales.ss_ticket_number = store_returns.sr_ticket_number
                       AND store_sales.ss_item_sk = store_returns.sr_item_sk
                       AND store_sales.ss_customer_sk = store_returns.sr_customer_sk
                       AND store_sales.ss_sold_date_sk = d1.d_date_sk
                       AND store_returns.sr_returned_date_sk = d2.d_date_sk
                       AND store_sales.ss_store_sk = store.s_store_sk
                       AND d1.d_moy = 12 AND d1.d_qoy = 4
                       AND d2.d_date_sk >= $lo AND d2.d_date_sk <= $hi",
                    &[("lo", RETURN_WINDOW_START + 14), ("hi", RETURN_WINDOW_START + 73)],
                )],
            );
            w.indexes.push(IndexSpec { dataset: "store_returns".into(), column: "sr_returned_date_sk".into() });
            w
        }
        // Two filters that each keep a tenth of the orders but always agree.
        "correlated-filters" => workload(
            name,
            seed,
            generated(Family::Tpch, sf, 0.0, 1.0, &["lineitem", "orders", "part", "customer"], &[]),
            vec![query(
                name,
                "SELECT customer.c_mktsegment, part.p_size
                 FROM lineitem, orders, part, customer
                 WHERE lineitem.l_orderkey = orders.o_orderkey
                   AND lineitem.l_partkey = part.p_partkey
                   AND orders.o_custkey = customer.c_custkey
                   AND orders.o_flag1 = 0 AND orders.o_flag2 = 0
                   AND part.p_size = 3",
                &[],
            )],
        ),
        "skewed-fact-join" => workload(
            name,
            seed,
            generated(Family::SkewedFacts, sf, 1.2, 0.0, &["fact1", "fact2", "dim"], &[]),
            vec![query(
                name,
                "SELECT fact2.f2_id, dim.d_val
                 FROM fact1, fact2, dim
                 WHERE fact1.f1_k = fact2.f2_k
                   AND fact1.f1_d = dim.d_id
                   AND dim.d_val < $cut",
                &[("cut", 60)],
            )],
        ),
        other => return Err(Error::Config(format!("unknown workload `{other}`; built-ins are {}", BUILTIN_NAMES.join(", ")))),
    };
    spec.validate()?;
    Ok(spec)
}
