use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{
    AttributeMeta, Catalog, Cloud, ColumnStats, RelationSchema, RelationStats, DEFAULT_TUPLE_ID,
};
use crate::engine::PlainTable;
use crate::error::{Error, Result};
use crate::partitioner::random_subset;
use crate::value::{parse_date, Datatype, Value};

use super::GeneratorConfig;

/// Byte unit attribute sizes are expressed in.
pub const SIZE_UNIT: u64 = 1024;

pub(super) const START_DATE: &str = "1992-01-01";
pub(super) const END_DATE: &str = "1998-12-31";
/// Latest order date; leaves room for ship and receipt dates.
const LAST_ORDER_DATE: &str = "1998-08-02";
/// Line items received on or before this date may be returned; items
/// shipped after it are still open.
const CURRENT_DATE: &str = "1995-06-17";

pub const MKT_SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "MACHINERY", "HOUSEHOLD"];
pub const RETURN_FLAGS: [&str; 3] = ["R", "A", "N"];
const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];
const NATIONS: [(&str, i64); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];
const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
const INSTRUCTIONS: [&str; 4] = ["DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN"];
const MODES: [&str; 7] = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"];
const CONTAINERS_1: [&str; 5] = ["SM", "LG", "MED", "JUMBO", "WRAP"];
const CONTAINERS_2: [&str; 8] = ["CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM"];
const TYPES_1: [&str; 6] = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"];
const TYPES_2: [&str; 5] = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"];
const TYPES_3: [&str; 5] = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"];
const COLORS: [&str; 16] = [
    "almond", "antique", "aquamarine", "azure", "beige", "bisque", "black", "blanched", "blue",
    "blush", "brown", "burlywood", "chartreuse", "chiffon", "coral", "cornflower",
];
const WORDS: [&str; 20] = [
    "furiously", "quickly", "carefully", "blithely", "slyly", "regular", "final", "pending",
    "express", "ironic", "special", "bold", "deposits", "requests", "packages", "accounts",
    "theodolites", "pinto", "beans", "foxes",
];

/// Relation layouts: name and `(attribute, datatype)` in declaration order.
pub const SCHEMA: [(&str, &[(&str, Datatype)]); 8] = {
    use Datatype::{Date as D, Decimal as M, Integer as I, Text as T};
    [
        ("region", &[("r_regionkey", I), ("r_name", T), ("r_comment", T)]),
        (
            "nation",
            &[("n_nationkey", I), ("n_name", T), ("n_regionkey", I), ("n_comment", T)],
        ),
        (
            "part",
            &[
                ("p_partkey", I),
                ("p_name", T),
                ("p_mfgr", T),
                ("p_brand", T),
                ("p_type", T),
                ("p_size", I),
                ("p_container", T),
                ("p_retailprice", M),
                ("p_comment", T),
            ],
        ),
        (
            "supplier",
            &[
                ("s_suppkey", I),
                ("s_name", T),
                ("s_address", T),
                ("s_nationkey", I),
                ("s_phone", T),
                ("s_acctbal", M),
                ("s_comment", T),
            ],
        ),
        (
            "partsupp",
            &[
                ("ps_partkey", I),
                ("ps_suppkey", I),
                ("ps_availqty", I),
                ("ps_supplycost", M),
                ("ps_comment", T),
            ],
        ),
        (
            "customer",
            &[
                ("c_custkey", I),
                ("c_name", T),
                ("c_address", T),
                ("c_nationkey", I),
                ("c_phone", T),
                ("c_acctbal", M),
                ("c_mktsegment", T),
                ("c_comment", T),
            ],
        ),
        (
            "orders",
            &[
                ("o_orderkey", I),
                ("o_custkey", I),
                ("o_orderstatus", T),
                ("o_totalprice", M),
                ("o_orderdate", D),
                ("o_orderpriority", T),
                ("o_clerk", T),
                ("o_shippriority", I),
                ("o_comment", T),
            ],
        ),
        (
            "lineitem",
            &[
                ("l_orderkey", I),
                ("l_partkey", I),
                ("l_suppkey", I),
                ("l_linenumber", I),
                ("l_quantity", I),
                ("l_extendedprice", M),
                ("l_discount", M),
                ("l_tax", M),
                ("l_returnflag", T),
                ("l_linestatus", T),
                ("l_shipdate", D),
                ("l_commitdate", D),
                ("l_receiptdate", D),
                ("l_shipinstruct", T),
                ("l_shipmode", T),
                ("l_comment", T),
            ],
        ),
    ]
};

/// Row counts per relation at a scale factor. Line items are exactly four
/// per order on average.
pub fn row_counts(scale_factor: f64) -> BTreeMap<&'static str, usize> {
    let scaled = |base: f64| ((base * scale_factor).round() as usize).max(1);
    let part = scaled(200_000.0);
    let orders = scaled(1_500_000.0);
    BTreeMap::from([
        ("region", 5),
        ("nation", 25),
        ("part", part),
        ("supplier", scaled(10_000.0)),
        ("partsupp", 4 * part),
        ("customer", scaled(150_000.0)),
        ("orders", orders),
        ("lineitem", 4 * orders),
    ])
}

/// Sparse order keys: eight used out of every 32.
fn order_key(i: usize) -> i64 {
    ((i / 8) * 32 + i % 8 + 1) as i64
}

fn retail_price(partkey: i64) -> i64 {
    90_000 + (partkey / 10) % 20_001 + 100 * (partkey % 1_000)
}

/// The `j`-th of four suppliers of a part.
fn supplier_of(partkey: i64, j: i64, suppliers: i64) -> i64 {
    let step = (suppliers / 4).max(1);
    (partkey - 1 + j * step) % suppliers + 1
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty list")
}

fn text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| pick(rng, &WORDS)).collect::<Vec<_>>().join(" ")
}

fn address(rng: &mut ChaCha8Rng) -> String {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    let n = rng.gen_range(10..=30);
    (0..n).map(|_| CHARS[rng.gen_range(0..CHARS.len())] as char).collect()
}

fn phone(rng: &mut ChaCha8Rng, nation: i64) -> String {
    format!(
        "{}-{}-{}-{}",
        nation + 10,
        rng.gen_range(100..1000),
        rng.gen_range(100..1000),
        rng.gen_range(1000..10000)
    )
}

struct Builder {
    relation: &'static str,
    columns: Vec<(String, Vec<Value>)>,
}

impl Builder {
    fn new(relation: &'static str, rows: usize) -> Self {
        let layout = SCHEMA.iter().find(|(r, _)| *r == relation).expect("known relation").1;
        Self {
            relation,
            columns: layout
                .iter()
                .map(|(n, _)| (n.to_string(), Vec::with_capacity(rows)))
                .collect(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        for ((_, col), v) in self.columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    fn finish(self) -> PlainTable {
        let n = self.columns.first().map_or(0, |(_, c)| c.len());
        PlainTable {
            relation: self.relation.to_string(),
            tids: (1..=n as u64).collect(),
            columns: self.columns,
        }
    }
}

fn t(s: impl Into<String>) -> Value {
    Value::Text(s.into())
}

/// Deterministic TPC-H-shaped tables.
pub fn generate_tables(config: &GeneratorConfig) -> Result<BTreeMap<String, PlainTable>> {
    config.validate()?;
    let counts = row_counts(config.scale_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = parse_date(START_DATE)?;
    let last_order = parse_date(LAST_ORDER_DATE)?;
    let current = parse_date(CURRENT_DATE)?;
    let mut out = BTreeMap::new();

    let mut b = Builder::new("region", 5);
    for (i, name) in REGIONS.iter().enumerate() {
        b.push(vec![Value::Int(i as i64), t(*name), t(text(&mut rng, 4))]);
    }
    out.insert("region".into(), b.finish());

    let mut b = Builder::new("nation", 25);
    for (i, (name, region)) in NATIONS.iter().enumerate() {
        b.push(vec![
            Value::Int(i as i64),
            t(*name),
            Value::Int(*region),
            t(text(&mut rng, 5)),
        ]);
    }
    out.insert("nation".into(), b.finish());

    let parts = counts["part"];
    let mut b = Builder::new("part", parts);
    for k in 1..=parts as i64 {
        let m = rng.gen_range(1..=5);
        let name: Vec<&str> = COLORS.choose_multiple(&mut rng, 5).copied().collect();
        b.push(vec![
            Value::Int(k),
            t(name.join(" ")),
            t(format!("Manufacturer#{m}")),
            t(format!("Brand#{m}{}", rng.gen_range(1..=5))),
            t(format!(
                "{} {} {}",
                pick(&mut rng, &TYPES_1),
                pick(&mut rng, &TYPES_2),
                pick(&mut rng, &TYPES_3)
            )),
            Value::Int(rng.gen_range(1..=50)),
            t(format!("{} {}", pick(&mut rng, &CONTAINERS_1), pick(&mut rng, &CONTAINERS_2))),
            Value::Decimal(retail_price(k)),
            t(text(&mut rng, 3)),
        ]);
    }
    out.insert("part".into(), b.finish());

    let suppliers = counts["supplier"];
    let mut b = Builder::new("supplier", suppliers);
    for k in 1..=suppliers as i64 {
        let nation = rng.gen_range(0..25);
        b.push(vec![
            Value::Int(k),
            t(format!("Supplier#{k:09}")),
            t(address(&mut rng)),
            Value::Int(nation),
            t(phone(&mut rng, nation)),
            Value::Decimal(rng.gen_range(-99_999..=999_999)),
            t(text(&mut rng, 6)),
        ]);
    }
    out.insert("supplier".into(), b.finish());

    let mut b = Builder::new("partsupp", 4 * parts);
    for p in 1..=parts as i64 {
        for j in 0..4 {
            b.push(vec![
                Value::Int(p),
                Value::Int(supplier_of(p, j, suppliers as i64)),
                Value::Int(rng.gen_range(1..=9_999)),
                Value::Decimal(rng.gen_range(100..=100_000)),
                t(text(&mut rng, 6)),
            ]);
        }
    }
    out.insert("partsupp".into(), b.finish());

    let customers = counts["customer"];
    let mut b = Builder::new("customer", customers);
    for k in 1..=customers as i64 {
        let nation = rng.gen_range(0..25);
        b.push(vec![
            Value::Int(k),
            t(format!("Customer#{k:09}")),
            t(address(&mut rng)),
            Value::Int(nation),
            t(phone(&mut rng, nation)),
            Value::Decimal(rng.gen_range(-99_999..=999_999)),
            t(pick(&mut rng, &MKT_SEGMENTS)),
            t(text(&mut rng, 8)),
        ]);
    }
    out.insert("customer".into(), b.finish());

    // Orders come in pairs whose line counts sum to eight.
    let orders = counts["orders"];
    let mut lines_per_order = Vec::with_capacity(orders);
    for _ in 0..orders / 2 {
        let c = rng.gen_range(1..=7);
        lines_per_order.extend([c, 8 - c]);
    }
    if orders % 2 == 1 {
        lines_per_order.push(4);
    }

    let mut ob = Builder::new("orders", orders);
    let mut lb = Builder::new("lineitem", 4 * orders);
    for (i, &lines) in lines_per_order.iter().enumerate() {
        let okey = order_key(i);
        let odate = rng.gen_range(start..=last_order);
        let mut total = 0i64;
        let mut open = 0;
        for ln in 1..=lines {
            let pkey = rng.gen_range(1..=parts as i64);
            let skey = supplier_of(pkey, rng.gen_range(0..4), suppliers as i64);
            let qty = rng.gen_range(1..=50i64);
            let price = qty * retail_price(pkey);
            let disc = rng.gen_range(0..=10i64);
            let tax = rng.gen_range(0..=8i64);
            let ship = odate + rng.gen_range(1..=121);
            let commit = odate + rng.gen_range(30..=90);
            let receipt = ship + rng.gen_range(1..=30);
            let flag = if receipt <= current {
                pick(&mut rng, &RETURN_FLAGS[..2])
            } else {
                "N"
            };
            let status = if ship > current { "O" } else { "F" };
            if status == "O" {
                open += 1;
            }
            total += price * (100 + tax) * (100 - disc) / 10_000;
            lb.push(vec![
                Value::Int(okey),
                Value::Int(pkey),
                Value::Int(skey),
                Value::Int(ln as i64),
                Value::Int(qty),
                Value::Decimal(price),
                Value::Decimal(disc),
                Value::Decimal(tax),
                t(flag),
                t(status),
                Value::Date(ship),
                Value::Date(commit),
                Value::Date(receipt),
                t(pick(&mut rng, &INSTRUCTIONS)),
                t(pick(&mut rng, &MODES)),
                t(text(&mut rng, 4)),
            ]);
        }
        let status = match open {
            0 => "F",
            n if n == lines => "O",
            _ => "P",
        };
        ob.push(vec![
            Value::Int(okey),
            Value::Int(rng.gen_range(1..=customers as i64)),
            t(status),
            Value::Decimal(total),
            Value::Date(odate),
            t(pick(&mut rng, &PRIORITIES)),
            t(format!("Clerk#{:09}", rng.gen_range(1..=1000))),
            Value::Int(0),
            t(text(&mut rng, 6)),
        ]);
    }
    out.insert("orders".into(), ob.finish());
    out.insert("lineitem".into(), lb.finish());
    Ok(out)
}

/// Exact statistics recomputed from data.
pub fn compute_stats(table: &PlainTable) -> RelationStats {
    let columns = table
        .columns
        .iter()
        .map(|(name, values)| {
            let distinct: BTreeSet<&Value> = values.iter().collect();
            let bytes: u64 = values.iter().map(Value::byte_width).sum();
            let width = if values.is_empty() {
                0
            } else {
                bytes.div_ceil(values.len() as u64) as u32
            };
            (
                name.clone(),
                ColumnStats {
                    distinct_count: distinct.len() as u64,
                    min: distinct.first().map(|v| (*v).clone()),
                    max: distinct.last().map(|v| (*v).clone()),
                    byte_width: width,
                },
            )
        })
        .collect();
    RelationStats {
        relation: table.relation.clone(),
        row_count: table.len() as u64,
        columns,
    }
}

/// Catalog describing `tables`: every attribute public, a seeded random
/// subset sensitive, capacity a fraction of the total size.
pub fn build_catalog(
    tables: &BTreeMap<String, PlainTable>,
    capacity_fraction: f64,
    sensitive_fraction: f64,
    seed: u64,
) -> Result<Catalog> {
    let mut relations = Vec::new();
    let mut attributes = Vec::new();
    let mut stats = BTreeMap::new();
    for (rel, layout) in SCHEMA {
        let table = tables
            .get(rel)
            .ok_or_else(|| Error::Validation(format!("no data for relation {rel}")))?;
        let s = compute_stats(table);
        for (name, datatype) in layout {
            let col = s.column(name)?;
            let bytes = s.row_count * col.byte_width as u64;
            attributes.push(AttributeMeta {
                name: name.to_string(),
                relation: rel.to_string(),
                datatype: *datatype,
                sensitive: false,
                size: bytes.div_ceil(SIZE_UNIT).max(1),
                placement: Cloud::Public,
            });
        }
        relations.push(RelationSchema {
            name: rel.to_string(),
            tuple_id: DEFAULT_TUPLE_ID.to_string(),
            attributes: layout.iter().map(|(n, _)| n.to_string()).collect(),
        });
        stats.insert(rel.to_string(), s);
    }
    let base = Catalog::new(relations, attributes, stats, u64::MAX, SIZE_UNIT)?;
    let capacity = (base.total_size() as f64 * capacity_fraction).floor() as u64;
    let sensitive = random_subset(&base, sensitive_fraction, seed);
    base.with_sensitivity(&sensitive).with_capacity(capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BTreeMap<String, PlainTable> {
        generate_tables(&GeneratorConfig {
            scale_factor: 0.0005,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn lineitem_is_four_per_order() {
        let counts = row_counts(0.001);
        assert_eq!(counts["orders"], 1500);
        assert_eq!(counts["lineitem"], 6000);
        let t = small();
        assert_eq!(t["lineitem"].len(), 4 * t["orders"].len());
    }

    #[test]
    fn order_keys_are_sparse_and_referenced() {
        let t = small();
        let keys: BTreeSet<&Value> = t["orders"].column("o_orderkey").unwrap().iter().collect();
        assert_eq!(keys.len(), t["orders"].len());
        assert!(t["lineitem"]
            .column("l_orderkey")
            .unwrap()
            .iter()
            .all(|k| keys.contains(k)));
        assert_eq!(order_key(8), 33);
    }

    #[test]
    fn sixty_one_attributes() {
        assert_eq!(SCHEMA.iter().map(|(_, a)| a.len()).sum::<usize>(), 61);
    }
}
