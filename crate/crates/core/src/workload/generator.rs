//! Deterministic TPC-H-like, TPC-DS-like and skewed fact-table generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{ColumnType, Row, Schema, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tpch,
    Tpcds,
    SkewedFacts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub scale_factor: f64,
    /// Zipf exponent for skewed foreign keys; 0 gives uniform keys.
    #[serde(default)]
    pub zipf: f64,
    /// Probability that a correlated filter column copies its partner.
    #[serde(default)]
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedTable {
    pub name: String,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

/// Rows per table at scale factor `sf`, never below `min`.
fn scaled(base: f64, sf: f64, min: usize) -> usize {
    ((base * sf).round() as usize).max(min)
}

fn rng_for(seed: u64, table: &str) -> ChaCha8Rng {
    let salt = table.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Draws keys in `1..=n`, Zipf-distributed with exponent `s` (uniform at 0).
struct KeyDist {
    n: u64,
    zipf: Option<Zipf<f64>>,
}

impl KeyDist {
    fn new(n: usize, s: f64) -> Result<Self> {
        if s < 0.0 || !s.is_finite() {
            return Err(Error::Config(format!("zipf exponent {s} must be finite and non-negative")));
        }
        let zipf = if s == 0.0 { None } else { Some(Zipf::new(n as f64, s).map_err(|e| Error::Config(format!("zipf: {e}")))?) };
        Ok(KeyDist { n: n as u64, zipf })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        match &self.zipf {
            None => rng.random_range(1..=self.n) as i64,
            Some(z) => z.sample(rng) as i64,
        }
    }
}

fn schema(cols: &[(&str, ColumnType)]) -> Schema {
    Schema::new(cols.to_vec(), cols[0].0).expect("static schema")
}

fn int(v: impl TryInto<i64>) -> Value {
    Value::Int(v.try_into().unwrap_or(i64::MAX))
}

pub const TPCH_ORDER_DAYS: i64 = 2406;
pub const COLORS: [&str; 20] = [
    "almond",
    "azure",
    "beige",
    "blue",
    "chartreuse",
    "coral",
    "cyan",
    "forest",
    "green",
    "honeydew",
    "ivory",
    "khaki",
    "lavender",
    "lime",
    "magenta",
    "navy",
    "olive",
    "peach",
    "plum",
    "tan",
];
pub const TYPE_PREFIX: [&str; 6] = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"];
pub const TYPE_SUFFIX: [&str; 5] = ["ANODIZED STEEL", "BRUSHED TIN", "PLATED COPPER", "POLISHED NICKEL", "BURNISHED BRASS"];
pub const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];
pub const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];

/// Row counts of the TPC-H-like tables at `sf`; `lineitem` is exactly four
/// rows per order and `partsupp` four rows per part.
pub fn tpch_row_counts(sf: f64) -> [(&'static str, usize); 8] {
    let part = scaled(200_000.0, sf, 20);
    let orders = scaled(1_500_000.0, sf, 20);
    [
        ("region", 5),
        ("nation", 25),
        ("supplier", scaled(10_000.0, sf, 8)),
        ("customer", scaled(150_000.0, sf, 20)),
        ("part", part),
        ("partsupp", 4 * part),
        ("orders", orders),
        ("lineitem", 4 * orders),
    ]
}

pub fn generate_tpch(sf: f64, seed: u64, zipf: f64, correlation: f64) -> Result<Vec<GeneratedTable>> {
    use ColumnType::{Int, Str};
    let counts = tpch_row_counts(sf);
    let n = |name: &str| counts.iter().find(|c| c.0 == name).map(|c| c.1).unwrap_or(0);
    let (suppliers, customers, parts, orders) = (n("supplier"), n("customer"), n("part"), n("orders"));
    let mut out = Vec::new();

    out.push(GeneratedTable {
        name: "region".into(),
        schema: schema(&[("r_regionkey", Int), ("r_name", Str)]),
        rows: REGIONS.iter().enumerate().map(|(i, r)| vec![int(i), Value::from(*r)]).collect(),
    });
    out.push(GeneratedTable {
        name: "nation".into(),
        schema: schema(&[("n_nationkey", Int), ("n_regionkey", Int), ("n_name", Str)]),
        rows: (0..25).map(|i| vec![int(i), int(i % 5), Value::Str(format!("NATION{i:02}"))]).collect(),
    });

    let mut rng = rng_for(seed, "supplier");
    out.push(GeneratedTable {
        name: "supplier".into(),
        schema: schema(&[("s_suppkey", Int), ("s_nationkey", Int), ("s_acctbal", Int)]),
        rows: (1..=suppliers).map(|i| vec![int(i), int(rng.random_range(0..25)), int(rng.random_range(-999..10_000))]).collect(),
    });

    let mut rng = rng_for(seed, "customer");
    out.push(GeneratedTable {
        name: "customer".into(),
        schema: schema(&[("c_custkey", Int), ("c_nationkey", Int), ("c_mktsegment", Str), ("c_acctbal", Int)]),
        rows: (1..=customers)
            .map(|i| {
                vec![
                    int(i),
                    int(rng.random_range(0..25)),
                    Value::from(SEGMENTS[rng.random_range(0..SEGMENTS.len())]),
                    int(rng.random_range(-999..10_000)),
                ]
            })
            .collect(),
    });

    let mut rng = rng_for(seed, "part");
    out.push(GeneratedTable {
        name: "part".into(),
        schema: schema(&[("p_partkey", Int), ("p_size", Int), ("p_color", Str), ("p_type", Str)]),
        rows: (1..=parts)
            .map(|i| {
                let ty = format!(
                    "{} {}",
                    TYPE_PREFIX[rng.random_range(0..TYPE_PREFIX.len())],
                    TYPE_SUFFIX[rng.random_range(0..TYPE_SUFFIX.len())]
                );
                vec![
                    int(i),
                    int(rng.random_range(1..=50)),
                    Value::Str(format!("{} {}", COLORS[rng.random_range(0..COLORS.len())], COLORS[rng.random_range(0..COLORS.len())])),
                    Value::Str(ty),
                ]
            })
            .collect(),
    });

    let supp_of = |part: usize, j: usize| -> usize {
        let s = suppliers;
        (part + j * (s / 4)) % s + 1
    };
    let mut rng = rng_for(seed, "partsupp");
    let mut ps = Vec::with_capacity(4 * parts);
    for p in 1..=parts {
        for j in 0..4 {
            ps.push(vec![int(ps.len() + 1), int(p), int(supp_of(p, j)), int(rng.random_range(1..1000))]);
        }
    }
    out.push(GeneratedTable {
        name: "partsupp".into(),
        schema: schema(&[("ps_id", Int), ("ps_partkey", Int), ("ps_suppkey", Int), ("ps_supplycost", Int)]),
        rows: ps,
    });

    let mut rng = rng_for(seed, "orders");
    let cust_dist = KeyDist::new(customers, zipf)?;
    out.push(GeneratedTable {
        name: "orders".into(),
        schema: schema(&[
            ("o_orderkey", Int),
            ("o_custkey", Int),
            ("o_orderdate", Int),
            ("o_priority", Int),
            ("o_flag1", Int),
            ("o_flag2", Int),
        ]),
        rows: (1..=orders)
            .map(|i| {
                let f1 = rng.random_range(0..10);
                let f2 = if rng.random_bool(correlation.clamp(0.0, 1.0)) { f1 } else { rng.random_range(0..10) };
                vec![
                    int(i),
                    int(cust_dist.sample(&mut rng)),
                    int(rng.random_range(0..TPCH_ORDER_DAYS)),
                    int(rng.random_range(1..=5)),
                    int(f1),
                    int(f2),
                ]
            })
            .collect(),
    });

    let mut rng = rng_for(seed, "lineitem");
    let part_dist = KeyDist::new(parts, zipf)?;
    let mut li = Vec::with_capacity(4 * orders);
    for o in 1..=orders {
        for _ in 0..4 {
            let p = part_dist.sample(&mut rng) as usize;
            let s = supp_of(p, rng.random_range(0..4));
            li.push(vec![
                int(li.len() + 1),
                int(o),
                int(p),
                int(s),
                int(rng.random_range(1..=50)),
                int(rng.random_range(0..TPCH_ORDER_DAYS + 120)),
            ]);
        }
    }
    out.push(GeneratedTable {
        name: "lineitem".into(),
        schema: schema(&[
            ("l_id", Int),
            ("l_orderkey", Int),
            ("l_partkey", Int),
            ("l_suppkey", Int),
            ("l_quantity", Int),
            ("l_shipdate", Int),
        ]),
        rows: li,
    });
    Ok(out)
}

/// Days covered by the date dimension: 1998-01-01 through 2002-12-31.
pub const DATE_DAYS: i64 = 1826;
/// First day of the window in which all store returns fall.
pub const RETURN_WINDOW_START: i64 = 1186;
pub const RETURN_WINDOW_DAYS: i64 = 90;

/// `(year, month, day of month)` of day `sk` counted from 1998-01-01.
pub fn calendar(sk: i64) -> (i64, i64, i64) {
    let mut rest = sk;
    let mut year = 1998;
    loop {
        let leap = year % 4 == 0 && (year % 100 != 0 || year % 400 == 0);
        let len = if leap { 366 } else { 365 };
        if rest < len {
            let months = [31, if leap { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
            let mut m = 0;
            while rest >= months[m] {
                rest -= months[m];
                m += 1;
            }
            return (year, m as i64 + 1, rest + 1);
        }
        rest -= len;
        year += 1;
    }
}

pub fn date_dim_schema() -> Schema {
    use ColumnType::Int;
    schema(&[("d_date_sk", Int), ("d_year", Int), ("d_moy", Int), ("d_qoy", Int), ("d_dom", Int)])
}

pub fn date_dim_rows() -> Vec<Row> {
    (0..DATE_DAYS)
        .map(|sk| {
            let (y, m, d) = calendar(sk);
            vec![int(sk), int(y), int(m), int((m - 1) / 3 + 1), int(d)]
        })
        .collect()
}

pub fn tpcds_row_counts(sf: f64) -> [(&'static str, usize); 6] {
    let ss = scaled(2_880_000.0, sf, 100);
    [
        ("date_dim", DATE_DAYS as usize),
        ("item", scaled(18_000.0, sf, 20)),
        ("store", scaled(12.0, sf, 5)),
        ("store_sales", ss),
        ("store_returns", ss / 10),
        ("catalog_sales", scaled(1_440_000.0, sf, 50)),
    ]
}

pub fn generate_tpcds(sf: f64, seed: u64, zipf: f64) -> Result<Vec<GeneratedTable>> {
    use ColumnType::{Int, Str};
    let counts = tpcds_row_counts(sf);
    let n = |name: &str| counts.iter().find(|c| c.0 == name).map(|c| c.1).unwrap_or(0);
    let (items, stores, ss_rows, cs_rows) = (n("item"), n("store"), n("store_sales"), n("catalog_sales"));
    let customers = scaled(100_000.0, sf, 50);
    let mut out = vec![GeneratedTable { name: "date_dim".into(), schema: date_dim_schema(), rows: date_dim_rows() }];

    let mut rng = rng_for(seed, "item");
    out.push(GeneratedTable {
        name: "item".into(),
        schema: schema(&[("i_item_sk", Int), ("i_category", Str), ("i_brand", Int)]),
        rows: (1..=items)
            .map(|i| vec![int(i), Value::from(SEGMENTS[rng.random_range(0..SEGMENTS.len())]), int(rng.random_range(1..=50))])
            .collect(),
    });
    out.push(GeneratedTable {
        name: "store".into(),
        schema: schema(&[("s_store_sk", Int), ("s_store_name", Str), ("s_state", Str)]),
        rows: (1..=stores).map(|i| vec![int(i), Value::Str(format!("store{i}")), Value::from(["TN", "GA", "OH"][i % 3])]).collect(),
    });

    let mut rng = rng_for(seed, "store_sales");
    let item_dist = KeyDist::new(items, zipf)?;
    let per_ticket = 10.min(items);
    let mut ss = Vec::with_capacity(ss_rows);
    let mut ticket = 0i64;
    while ss.len() < ss_rows {
        ticket += 1;
        let date = rng.random_range(0..DATE_DAYS);
        let cust = rng.random_range(1..=customers as i64);
        let store = rng.random_range(1..=stores as i64);
        let first = item_dist.sample(&mut rng) as usize - 1;
        for j in 0..per_ticket {
            if ss.len() == ss_rows {
                break;
            }
            let item = (first + j * 7) % items + 1;
            ss.push(vec![int(ss.len() + 1), int(date), int(item), int(cust), int(ticket), int(store), int(rng.random_range(1..=100))]);
        }
    }

    let mut rng = rng_for(seed, "store_returns");
    let sr: Vec<Row> = ss
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 10 == 3)
        .take(ss_rows / 10)
        .enumerate()
        .map(|(k, (_, s))| {
            vec![
                int(k + 1),
                int(RETURN_WINDOW_START + rng.random_range(0..RETURN_WINDOW_DAYS)),
                s[2].clone(),
                s[3].clone(),
                s[4].clone(),
                int(rng.random_range(1..=10)),
            ]
        })
        .collect();

    let mut rng = rng_for(seed, "catalog_sales");
    let cs: Vec<Row> = (0..cs_rows)
        .map(|i| {
            let (cust, item) = if i % 2 == 0 && !sr.is_empty() {
                let r = &sr[(i / 2) % sr.len()];
                (r[3].clone(), r[2].clone())
            } else {
                (int(rng.random_range(1..=customers as i64)), int(item_dist.sample(&mut rng)))
            };
            vec![int(i + 1), int(rng.random_range(0..DATE_DAYS)), item, cust, int(rng.random_range(1..=100))]
        })
        .collect();

    out.push(GeneratedTable {
        name: "store_sales".into(),
        schema: schema(&[
            ("ss_id", Int),
            ("ss_sold_date_sk", Int),
            ("ss_item_sk", Int),
            ("ss_customer_sk", Int),
            ("ss_ticket_number", Int),
            ("ss_store_sk", Int),
            ("ss_quantity", Int),
        ]),
        rows: ss,
    });
    out.push(GeneratedTable {
        name: "store_returns".into(),
        schema: schema(&[
            ("sr_id", Int),
            ("sr_returned_date_sk", Int),
            ("sr_item_sk", Int),
            ("sr_customer_sk", Int),
            ("sr_ticket_number", Int),
            ("sr_return_quantity", Int),
        ]),
        rows: sr,
    });
    out.push(GeneratedTable {
        name: "catalog_sales".into(),
        schema: schema(&[
            ("cs_id", Int),
            ("cs_sold_date_sk", Int),
            ("cs_item_sk", Int),
            ("cs_bill_customer_sk", Int),
            ("cs_quantity", Int),
        ]),
        rows: cs,
    });
    Ok(out)
}

pub fn skewed_row_counts(sf: f64) -> [(&'static str, usize); 3] {
    [("fact1", scaled(2_000_000.0, sf, 100)), ("fact2", scaled(100_000.0, sf, 10)), ("dim", 1000)]
}

/// Two fact tables joined on a shared key, Zipf-skewed in `fact1` and
/// uniform in `fact2`, plus a dimension referenced by `fact1`.
pub fn generate_skewed(sf: f64, seed: u64, zipf: f64) -> Result<Vec<GeneratedTable>> {
    use ColumnType::Int;
    let counts = skewed_row_counts(sf);
    let (f1, f2, dim) = (counts[0].1, counts[1].1, counts[2].1);
    let domain = scaled(500_000.0, sf, 10);
    let mut rng = rng_for(seed, "fact1");
    let skewed = KeyDist::new(domain, zipf)?;
    let fact1 = (1..=f1).map(|i| vec![int(i), int(skewed.sample(&mut rng)), int(rng.random_range(0..dim as i64))]).collect();
    let mut rng = rng_for(seed, "fact2");
    let fact2 = (1..=f2).map(|i| vec![int(i), int(rng.random_range(1..=domain as i64))]).collect();
    let mut rng = rng_for(seed, "dim");
    let dims = (0..dim).map(|i| vec![int(i), int(rng.random_range(0..100))]).collect();
    Ok(vec![
        GeneratedTable { name: "fact1".into(), schema: schema(&[("f1_id", Int), ("f1_k", Int), ("f1_d", Int)]), rows: fact1 },
        GeneratedTable { name: "fact2".into(), schema: schema(&[("f2_id", Int), ("f2_k", Int)]), rows: fact2 },
        GeneratedTable { name: "dim".into(), schema: schema(&[("d_id", Int), ("d_val", Int)]), rows: dims },
    ])
}

/// Table names and row counts of `family` at scale factor `sf`.
pub fn row_counts(family: Family, sf: f64) -> Vec<(&'static str, usize)> {
    match family {
        Family::Tpch => tpch_row_counts(sf).to_vec(),
        Family::Tpcds => tpcds_row_counts(sf).to_vec(),
        Family::SkewedFacts => skewed_row_counts(sf).to_vec(),
    }
}

pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Vec<GeneratedTable>> {
    if !(spec.scale_factor > 0.0 && spec.scale_factor.is_finite()) {
        return Err(Error::Config(format!("scale factor {} must be positive", spec.scale_factor)));
    }
    match spec.family {
        Family::Tpch => generate_tpch(spec.scale_factor, seed, spec.zipf, spec.correlation),
        Family::Tpcds => generate_tpcds(spec.scale_factor, seed, spec.zipf),
        Family::SkewedFacts => generate_skewed(spec.scale_factor, seed, spec.zipf),
    }
}
