//! End-to-end acceptance checks. Runs without the test harness so that each
//! criterion prints exactly one PASS/FAIL line.
//!
//! A criterion listed in `KNOWN_GAPS` reports FAIL without failing the
//! process; every other failure exits nonzero.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hcloud::bucketize::{
    compute_num_partitions, MappedPredicate, PartitionConfig, SchemeRegistry, DECIMAL_DOMAIN,
    INTEGER_DOMAIN, TEXT_PARTITIONS,
};
use hcloud::catalog::{AttrRef, AttributeMeta, Catalog, Cloud, RelationSchema};
use hcloud::costmodel::{calibrate, query_cost, CostMode, CostModel, CostWeights};
use hcloud::crypto::{Cipher, ETuple, SecretKey};
use hcloud::engine::{
    execute, ground_truth, place, write_fragments, EngineHarness, ExecOptions, PlainTable,
    SimProfile, Stores,
};
use hcloud::partitioner::{
    brute_force_optimum, css_dp, css_hc, knapsack, random_subset, Instance, Method, SeedStrategy,
};
use hcloud::queryir::{
    parse_workload_queries, plan_query, CompareOp, Expr, JoinKey, Predicate, Projection, Query,
};
use hcloud::report::{constant_within, non_increasing_within, Bench};
use hcloud::value::{Datatype, Value};
use hcloud::workload::{generate_data, generate_workload, instantiate, Dataset, GeneratorConfig, Template};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail for reasons recorded with the project notes.
const KNOWN_GAPS: &[&str] = &["partition-count sweep trends"];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn key() -> SecretKey {
    SecretKey::from_bytes(&[0x5au8; 32]).unwrap()
}

fn dataset(sf: f64, queries: usize) -> (Dataset, Vec<Query>) {
    let config = GeneratorConfig {
        scale_factor: sf,
        workload_size: queries,
        ..Default::default()
    };
    let data = generate_data(&config).unwrap();
    let workload = generate_workload(&config, &data.catalog).unwrap();
    (data, workload)
}

fn everything(c: &Catalog) -> BTreeSet<AttrRef> {
    c.attributes().iter().map(AttributeMeta::attr_ref).collect()
}

fn stores_for(data: &Dataset, placed: &Catalog, config: PartitionConfig) -> (SchemeRegistry, Stores) {
    let k = key();
    let schemes = SchemeRegistry::build(placed, config, &k.ident_key()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let stores = Stores::build(&data.tables, placed, &schemes, &k, &mut rng).unwrap();
    (schemes, stores)
}

/// Count of queries whose sorted result differs from the reference.
fn mismatches(data: &Dataset, placed: &Catalog, workload: &[Query]) -> (usize, Option<String>) {
    let (schemes, stores) = stores_for(data, placed, PartitionConfig::default());
    let mut bad = 0;
    let mut first = None;
    for q in workload {
        let plan = plan_query(q, placed, &schemes).unwrap();
        let got = execute(&plan, &stores, &key(), &ExecOptions::default()).map(|(rs, _)| rs.sorted().rows);
        let expected = ground_truth(q, placed, &data.tables).unwrap();
        if got.as_ref().ok() != Some(&expected) {
            bad += 1;
            first.get_or_insert_with(|| q.to_sql());
        }
    }
    (bad, first)
}

fn oracle_equivalence() -> Outcome {
    let (data, workload) = dataset(0.001, 100);
    let c = &data.catalog;
    let model = CostModel::new(c, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
    let dp = css_dp(&Instance::new(&model, &workload, c.capacity())).unwrap();
    let placements = [
        ("all-public", place(c, BTreeSet::new()).unwrap()),
        ("all-private", place(c, everything(c)).unwrap()),
        ("dp", c.apply_placement(&dp).unwrap()),
    ];
    let lineitems = data.tables["lineitem"].len();
    let mut details = vec![format!("{lineitems} line items, {} queries", workload.len())];
    let mut pass = true;
    for (name, placed) in &placements {
        let (bad, first) = mismatches(&data, placed, &workload);
        pass &= bad == 0;
        details.push(match first {
            None => format!("{name} exact"),
            Some(sql) => format!("{name} {bad} mismatches, first: {sql}"),
        });
    }
    outcome(pass, details.join("; "))
}

fn partition_count_formula() -> Outcome {
    let int = compute_num_partitions(INTEGER_DOMAIN.0, INTEGER_DOMAIN.1).unwrap();
    let dec = compute_num_partitions(DECIMAL_DOMAIN.0, DECIMAL_DOMAIN.1).unwrap();
    let (data, _) = dataset(0.0002, 0);
    let c = data.catalog.with_sensitivity(&everything(&data.catalog));
    let schemes = SchemeRegistry::build(&c, PartitionConfig::default(), &key().ident_key()).unwrap();
    let text_counts: BTreeSet<usize> = schemes
        .schemes()
        .filter(|s| s.datatype == Datatype::Text)
        .map(|s| s.partition_count())
        .collect();
    let defaults = PartitionConfig::default();
    let pass = int == 31
        && dec == 34
        && defaults.integer == 31
        && defaults.decimal == 34
        && text_counts == BTreeSet::from([TEXT_PARTITIONS])
        && TEXT_PARTITIONS == 36;
    outcome(pass, format!("integer {int}, decimal {dec}, text {text_counts:?}"))
}

/// A literal drawn from the column, nudged outside the domain now and then.
fn literal(rng: &mut ChaCha8Rng, column: &[Value], datatype: Datatype) -> Value {
    let v = column.choose(rng).unwrap().clone();
    if datatype == Datatype::Text || rng.gen_bool(0.6) {
        return v;
    }
    let x = v.ordinal().unwrap() + rng.gen_range(-400..=400);
    Value::from_ordinal(datatype, x).unwrap_or(v)
}

fn random_predicate(rng: &mut ChaCha8Rng, c: &Catalog, tables: &BTreeMap<String, PlainTable>) -> Predicate {
    let attr = c.attributes().choose(rng).unwrap();
    let column = tables[&attr.relation].column(&attr.name).unwrap();
    let a = attr.attr_ref();
    if rng.gen_bool(0.2) {
        let (x, y) = (literal(rng, column, attr.datatype), literal(rng, column, attr.datatype));
        let (low, high) = if x <= y { (x, y) } else { (y, x) };
        return Predicate::Between { attr: a, low, high };
    }
    let op = *[CompareOp::Eq, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge]
        .choose(rng)
        .unwrap();
    Predicate::Compare {
        attr: a,
        op,
        value: literal(rng, column, attr.datatype),
    }
}

fn superset_invariant() -> Outcome {
    let (data, _) = dataset(0.001, 0);
    let sensitive = data.catalog.all_public().with_sensitivity(&everything(&data.catalog));
    let placed = place(&sensitive, BTreeSet::new()).unwrap();
    let configs = [PartitionConfig::default(), PartitionConfig::uniform(4)];
    let built: Vec<_> = configs.iter().map(|&cfg| stores_for(&data, &placed, cfg)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut missed, mut wrong, mut true_matches, mut false_positives) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..1000 {
        let (schemes, stores) = &built[i % built.len()];
        let pred = random_predicate(&mut rng, &placed, &data.tables);
        let attr = pred.attrs()[0].clone();
        let MappedPredicate::Selection(mapped) = schemes.map_condition(&pred).unwrap() else {
            missed += 1;
            continue;
        };
        let scheme = schemes.get(&attr).unwrap();
        let column = data.tables[&attr.relation].column(&attr.attribute).unwrap();
        for v in column {
            let holds = pred.eval(|_| Some(v.clone())).unwrap();
            let kept = mapped.identifier_set.contains(&scheme.map_value(v));
            true_matches += holds as u64;
            missed += (holds && !kept) as u64;
            false_positives += (!holds && kept) as u64;
        }
        let query = Query {
            projections: vec![Projection {
                expr: Expr::Column(attr.clone()),
                name: attr.attribute.clone(),
            }],
            sources: vec![attr.relation.clone()],
            predicates: vec![pred],
            freq: 1,
        };
        let plan = plan_query(&query, &placed, schemes).unwrap();
        let (rs, _) = execute(&plan, stores, &key(), &ExecOptions::default()).unwrap();
        if rs.sorted().rows != ground_truth(&query, &placed, &data.tables).unwrap() {
            wrong += 1;
        }
    }
    outcome(
        missed == 0 && wrong == 0,
        format!(
            "1000 predicates, {true_matches} true matches, {missed} missed, \
             {false_positives} false positives removed, {wrong} inexact post-filters"
        ),
    )
}

/// Best profit over feasible subsets, summed in index order like the table.
fn brute_knapsack(sizes: &[u64], profits: &[f64], capacity: u64) -> f64 {
    let n = sizes.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let mut size = 0;
        let mut profit = 0.0;
        for i in (0..n).filter(|i| mask >> i & 1 == 1) {
            size += sizes[i];
            profit += profits[i];
        }
        if size <= capacity && profit > best {
            best = profit;
        }
    }
    best
}

fn dp_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut instances: Vec<(Vec<u64>, Vec<f64>, u64)> = (0..40)
        .map(|_| {
            let n = rng.gen_range(1..=15);
            let sizes: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=20)).collect();
            // Multiples of 1/8 keep every sum exact.
            let profits = (0..n).map(|_| rng.gen_range(-64..=256) as f64 / 8.0).collect();
            let capacity = rng.gen_range(0..=sizes.iter().sum::<u64>());
            (sizes, profits, capacity)
        })
        .collect();
    for seed in 0..10 {
        let (catalog, workload) = small_instance(seed);
        let model = CostModel::new(&catalog, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
        let inst = Instance::new(&model, &workload, catalog.capacity());
        let profits = hcloud::partitioner::attribute_profits(&inst).unwrap().profits;
        let sizes = catalog.attributes().iter().map(|a| a.size).collect();
        instances.push((sizes, profits, catalog.capacity()));
    }
    for (k, (sizes, profits, capacity)) in instances.iter().enumerate() {
        let (table, chosen) = knapsack(sizes, profits, *capacity).unwrap();
        let picked = chosen.iter().fold(0.0, |acc, &i| acc + profits[i]);
        let used: u64 = chosen.iter().map(|&i| sizes[i]).sum();
        let best = brute_knapsack(sizes, profits, *capacity);
        let top = table.profit(table.items(), table.capacity());
        if picked != best || top != best || used > *capacity {
            failures.push(format!("#{k}: dp {picked} table {top} brute {best}"));
        }
    }
    let detail = format!("{} instances, {} differ {}", instances.len(), failures.len(), failures.join(", "));
    outcome(failures.is_empty(), detail.trim_end())
}

const SMALL_RELATIONS: [(&str, &[&str]); 3] = [
    ("customer", &["c_custkey", "c_nationkey", "c_acctbal", "c_mktsegment"]),
    ("orders", &["o_orderkey", "o_custkey", "o_orderdate", "o_totalprice"]),
    ("nation", &["n_nationkey", "n_name"]),
];
const SMALL_KEYS: [&str; 5] = ["c_custkey", "c_nationkey", "o_custkey", "o_orderkey", "n_nationkey"];

fn small_data() -> &'static Dataset {
    use std::sync::OnceLock;
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| dataset(0.002, 0).0)
}

/// A catalog of at most ten attributes over customer, orders and nation,
/// with a random workload over it.
fn small_instance(seed: u64) -> (Catalog, Vec<Query>) {
    let data = small_data();
    let full = &data.catalog;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut relations = Vec::new();
    let mut attributes = Vec::new();
    for (rel, names) in SMALL_RELATIONS {
        let kept: Vec<String> = names
            .iter()
            .filter(|n| SMALL_KEYS.contains(n) || rng.gen_bool(0.6))
            .map(|n| n.to_string())
            .collect();
        for n in &kept {
            let mut meta = full.attribute(&AttrRef::new(rel, n.as_str())).unwrap().clone();
            meta.sensitive = rng.gen_bool(0.5);
            meta.placement = Cloud::Public;
            attributes.push(meta);
        }
        let schema = full.relation(rel).unwrap();
        relations.push(RelationSchema {
            name: rel.into(),
            tuple_id: schema.tuple_id.clone(),
            attributes: kept,
        });
    }
    let stats = SMALL_RELATIONS
        .iter()
        .map(|(rel, _)| (rel.to_string(), full.stats(rel).unwrap().clone()))
        .collect();
    let base = Catalog::new(relations, attributes, stats, u64::MAX, full.size_unit()).unwrap();
    let capacity = (base.total_size() as f64 * rng.gen_range(0.2..0.7)).floor() as u64;
    let catalog = base.with_capacity(capacity).unwrap();
    let workload = (0..rng.gen_range(4..=10))
        .map(|_| small_query(&mut rng, &catalog, &data.tables))
        .collect();
    (catalog, workload)
}

fn small_query(rng: &mut ChaCha8Rng, c: &Catalog, tables: &BTreeMap<String, PlainTable>) -> Query {
    let join = |l: &str, r: &str| {
        let key = |n: &str| {
            let rel = c.attributes().iter().find(|a| a.name == n).unwrap();
            AttrRef::new(rel.relation.clone(), n)
        };
        Predicate::EquiJoin(JoinKey { left: key(l), right: key(r) })
    };
    let (sources, mut predicates): (Vec<&str>, Vec<Predicate>) = match rng.gen_range(0..5) {
        0 => (vec!["customer"], vec![]),
        1 => (vec!["orders"], vec![]),
        2 => (vec!["customer", "orders"], vec![join("c_custkey", "o_custkey")]),
        3 => (vec!["customer", "nation"], vec![join("c_nationkey", "n_nationkey")]),
        _ => (
            vec!["customer", "orders", "nation"],
            vec![join("c_custkey", "o_custkey"), join("c_nationkey", "n_nationkey")],
        ),
    };
    let in_scope: Vec<&AttributeMeta> = c
        .attributes()
        .iter()
        .filter(|a| sources.contains(&a.relation.as_str()))
        .collect();
    for _ in 0..rng.gen_range(0..=2) {
        let a = in_scope.choose(rng).unwrap();
        let column = tables[&a.relation].column(&a.name).unwrap();
        let op = *[CompareOp::Eq, CompareOp::Lt, CompareOp::Ge].choose(rng).unwrap();
        predicates.push(Predicate::Compare {
            attr: a.attr_ref(),
            op,
            value: column.choose(rng).unwrap().clone(),
        });
    }
    let width = rng.gen_range(1..=3);
    let projections = in_scope
        .choose_multiple(rng, width)
        .map(|a| Projection {
            expr: Expr::Column(a.attr_ref()),
            name: a.name.clone(),
        })
        .collect();
    Query {
        projections,
        sources: sources.into_iter().map(String::from).collect(),
        predicates,
        freq: rng.gen_range(1..=1000),
    }
}

fn oracle_gap() -> Outcome {
    let mut within = 0;
    let mut gaps = Vec::new();
    for seed in 0..20 {
        let (catalog, workload) = small_instance(100 + seed);
        let model = CostModel::new(&catalog, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
        let inst = Instance::new(&model, &workload, catalog.capacity());
        let opt = brute_force_optimum(&inst).unwrap().achieved_cost;
        let dp = css_dp(&inst).unwrap().achieved_cost;
        let hc = [SeedStrategy::Query, SeedStrategy::Sensitivity]
            .map(|s| css_hc(&inst, s, 500, seed).unwrap().plan.achieved_cost);
        let best_hc = hc[0].min(hc[1]);
        within += (best_hc <= 1.25 * opt) as usize;
        gaps.push(format!(
            "n={} dp {:.3} hc {:.3}/{:.3}",
            catalog.attributes().len(),
            dp / opt,
            hc[0] / opt,
            hc[1] / opt
        ));
    }
    outcome(within >= 16, format!("{within}/20 within 1.25x of optimum; ratios: {}", gaps.join(", ")))
}

/// Line-item heavy four-way join workload with its attributes sensitive.
fn sweep_setup() -> (Dataset, Vec<Query>, Catalog) {
    let (data, _) = dataset(0.00005, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut text = String::new();
    for _ in 0..5 {
        let sql = instantiate(Template::Q10, &mut rng).unwrap();
        text.push_str(&format!("-- freq: {}\n{sql};\n", rng.gen_range(1..=1000)));
    }
    let workload = parse_workload_queries(&text, &data.catalog).unwrap();
    let sensitive: BTreeSet<AttrRef> = workload.iter().flat_map(Query::referenced_attrs).collect();
    let c = data.catalog.all_public().with_sensitivity(&sensitive);
    let capacity = (c.total_size() as f64 * 0.28).floor() as u64;
    let catalog = c.with_capacity(capacity).unwrap();
    (data, workload, catalog)
}

fn sweep_trends() -> Outcome {
    let (data, workload, catalog) = sweep_setup();
    let k = key();
    let bench = Bench {
        catalog: &catalog,
        tables: &data.tables,
        workload: &workload,
        key: &k,
        weights: CostWeights::default(),
        mode: CostMode::Sum,
        options: ExecOptions::default(),
        seed: 42,
        bound: 500,
    };
    let mut series: std::collections::HashMap<Method, (Vec<f64>, Vec<f64>)> = Default::default();
    for p in [1u32, 2, 4, 8, 16, 32] {
        for m in [Method::AllPublic, Method::AllPrivate, Method::Dp] {
            let config = PartitionConfig::uniform(p);
            let (_, placed) = bench.partition(&catalog, config, m).unwrap();
            let run = bench.run(&placed, config).unwrap();
            let e = series.entry(m).or_default();
            e.0.push(run.total_measured);
            e.1.push(run.total_modeled);
        }
    }
    let public = &series[&Method::AllPublic];
    let private = &series[&Method::AllPrivate];
    let dp = &series[&Method::Dp];
    let falling = non_increasing_within(&public.0, 0.10);
    let flat = constant_within(&private.0, 0.10);
    let at4 = 2;
    let dp_wins = dp.1[at4] <= public.1[at4].min(private.1[at4]);
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ");
    outcome(
        falling && flat && dp_wins,
        format!(
            "all-public measured falls: {falling} [{}]; all-private measured flat: {flat} [{}]; \
             modeled at P=4 dp {:.1} vs all-public {:.1}, all-private {:.1}: {}",
            fmt(&public.0),
            fmt(&private.0),
            dp.1[at4],
            public.1[at4],
            private.1[at4],
            if dp_wins { "dp best" } else { "dp not best" }
        ),
    )
}

fn calibration_recovery() -> Outcome {
    let (data, _) = dataset(0.001, 0);
    let mut harness = EngineHarness {
        catalog: &data.catalog,
        tables: &data.tables,
        key: key(),
        config: PartitionConfig::default(),
        options: ExecOptions {
            profile: SimProfile::with_private_ratio(7.5),
            ..Default::default()
        },
        seed: 1,
    };
    let w = calibrate(&mut harness).unwrap();
    let ratio = w.w1 / w.w2;
    outcome(
        (ratio / 7.5 - 1.0).abs() <= 0.2,
        format!("recovered w1/w2 = {ratio:.4} (w1 {:.3e}, w2 {:.3e}, w3 {:.3e}, w4 {:.3e})", w.w1, w.w2, w.w3, w.w4),
    )
}

fn random_value(rng: &mut ChaCha8Rng, datatype: Datatype) -> Value {
    match datatype {
        Datatype::Integer => Value::Int(rng.gen_range(-(1 << 40)..(1i64 << 40))),
        Datatype::Decimal => Value::Decimal(rng.gen_range(-999_999_999_999..=999_999_999_999)),
        Datatype::Date => Value::Date(rng.gen_range(-40_000..=60_000)),
        Datatype::Text => {
            let len = rng.gen_range(0..=40);
            Value::Text((0..len).map(|_| rng.gen_range(' '..='\u{3ff}')).collect())
        }
    }
}

/// Fields of public fragment files that leak a sensitive value.
fn scan_public(dir: &Path, placed: &Catalog, tables: &BTreeMap<String, PlainTable>) -> Vec<String> {
    let mut findings = Vec::new();
    let mut plain_public = BTreeSet::new();
    for a in placed.attributes().iter().filter(|a| a.placement == Cloud::Public && !a.sensitive) {
        plain_public.extend(tables[&a.relation].column(&a.name).unwrap().iter().map(Value::to_string));
    }
    let mut needles: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for a in placed.attributes().iter().filter(|a| a.is_encrypted()) {
        let path = dir.join("public").join(format!("{}.csv", a.relation));
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let header = reader.headers().unwrap().clone();
        let col = header.iter().position(|h| h == a.name).unwrap();
        let id = header.iter().position(|h| h == format!("{}_id", a.name)).unwrap();
        let values = tables[&a.relation].column(&a.name).unwrap();
        for (rec, v) in reader.records().map(Result::unwrap).zip(values) {
            if ETuple::decode(&rec[col], &rec[id]).is_err() || rec[col] == v.to_string() {
                findings.push(format!("{}.{}: {:?}", a.relation, a.name, &rec[col]));
            }
        }
        needles.entry(a.relation.clone()).or_default().extend(
            values
                .iter()
                .map(Value::to_string)
                .filter(|v| v.len() >= 4 && v.chars().any(|ch| !ch.is_ascii_hexdigit()))
                .filter(|v| !plain_public.contains(v)),
        );
    }
    for (rel, values) in needles {
        let path = dir.join("public").join(format!("{rel}.csv"));
        let text = fs::read_to_string(&path).unwrap();
        // Needles carry a non-hex character, so they can only occur inside a
        // non-hex field unless they span a field separator.
        let mut fields = String::new();
        for rec in csv::Reader::from_path(&path).unwrap().records().map(Result::unwrap) {
            for f in rec.iter().filter(|f| !f.chars().all(|c| c.is_ascii_hexdigit() || c == ':')) {
                fields.push_str(f);
                fields.push('\n');
            }
        }
        let found = |v: &str| match v.contains([',', '"', '\n']) {
            true => text.contains(v),
            false => fields.contains(v),
        };
        for v in values.iter().filter(|v| found(v)) {
            findings.push(format!("literal {v:?} in {}", path.display()));
        }
    }
    findings
}

fn crypto() -> Outcome {
    let (data, workload) = dataset(0.001, 20);
    let all_sensitive = data.catalog.all_public().with_sensitivity(&everything(&data.catalog));
    let k = key();
    let cipher = Cipher::new(&k);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let schemes = SchemeRegistry::build(&all_sensitive, PartitionConfig::default(), &k.ident_key()).unwrap();
    let mut round_trip_failures = 0;
    for datatype in [Datatype::Integer, Datatype::Decimal, Datatype::Date, Datatype::Text] {
        let scheme = schemes.schemes().find(|s| s.datatype == datatype).unwrap();
        for _ in 0..10_000 {
            let v = random_value(&mut rng, datatype);
            let e = cipher.encrypt(scheme, &v, &mut rng);
            let back = cipher.decrypt(&e);
            if back.as_ref().ok() != Some(&v) || e.partition_id != scheme.map_value(&v) {
                round_trip_failures += 1;
            }
        }
    }
    let model = CostModel::new(&data.catalog, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
    let dp = css_dp(&Instance::new(&model, &workload, data.catalog.capacity())).unwrap();
    let placements = [
        place(&all_sensitive, BTreeSet::new()).unwrap(),
        data.catalog.apply_placement(&dp).unwrap(),
    ];
    let mut findings = Vec::new();
    for placed in &placements {
        let (_, stores) = stores_for(&data, placed, PartitionConfig::default());
        let dir = tempfile::tempdir().unwrap();
        write_fragments(&stores, dir.path()).unwrap();
        findings.extend(scan_public(dir.path(), placed, &data.tables));
    }
    // Control: a planted plaintext value must be caught.
    let placed = &placements[0];
    let (_, stores) = stores_for(&data, placed, PartitionConfig::default());
    let dir = tempfile::tempdir().unwrap();
    write_fragments(&stores, dir.path()).unwrap();
    let planted = data.tables["customer"].column("c_name").unwrap()[0].to_string();
    let path = dir.path().join("public").join("customer.csv");
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "c_name").unwrap();
    let mut rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    rows[0] = rows[0].iter().enumerate().map(|(i, f)| if i == col { planted.as_str() } else { f }).collect();
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(&header).unwrap();
    rows.iter().for_each(|r| w.write_record(r).unwrap());
    w.flush().unwrap();
    let control = !scan_public(dir.path(), placed, &data.tables).is_empty();
    outcome(
        round_trip_failures == 0 && findings.is_empty() && control,
        format!(
            "4 x 10000 round trips, {round_trip_failures} failures; planted leak caught: {control}; \
             scanner matches: {}{}",
            findings.len(),
            findings.first().map(|f| format!(" (first {f})")).unwrap_or_default()
        ),
    )
}

fn cost_algebra() -> Outcome {
    let (data, workload) = dataset(0.001, 1000);
    let c = &data.catalog;
    let w = CostWeights::default();
    let sum_model = CostModel::new(c, PartitionConfig::default(), w, CostMode::Sum).unwrap();
    let max_model = CostModel::new(c, PartitionConfig::default(), w, CostMode::Max).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let placements: Vec<Catalog> = (0..4)
        .map(|i| {
            let private = random_subset(c, 0.25 * i as f64, rng.gen());
            place(c, private).unwrap()
        })
        .collect();
    let (mut linear_bad, mut order_bad, mut iff_bad, mut equal, mut single_cloud) = (0, 0, 0, 0, 0);
    for (i, q) in workload.iter().enumerate() {
        let placed = &placements[i % placements.len()];
        let sizes = sum_model.query_sizes(q, placed).unwrap();
        for f in [1u64, 2, 7, 1000] {
            let one = query_cost(&w, CostMode::Sum, &sizes, 1);
            let many = query_cost(&w, CostMode::Sum, &sizes, f);
            linear_bad += (many.cost != one.cost || many.total != f as f64 * one.cost) as usize;
        }
        let s = query_cost(&w, CostMode::Sum, &sizes, q.freq);
        let m = query_cost(&w, CostMode::Max, &sizes, q.freq);
        order_bad += (m.cost > s.cost) as usize;
        let one_zero = s.public_cost == 0.0 || s.private_cost == 0.0;
        iff_bad += ((m.cost == s.cost) != one_zero) as usize;
        equal += (m.cost == s.cost) as usize;
        single_cloud += one_zero as usize;
    }
    // Whole-workload totals scale exactly under power-of-two frequency factors.
    let base = sum_model.cost_on(&workload, &placements[1]).unwrap().total;
    let doubled: Vec<Query> = workload.iter().cloned().map(|mut q| {
        q.freq *= 4;
        q
    }).collect();
    let scaled = sum_model.cost_on(&doubled, &placements[1]).unwrap().total;
    linear_bad += (scaled != 4.0 * base) as usize;
    let max_total = max_model.cost_on(&workload, &placements[1]).unwrap().total;
    order_bad += (max_total > base) as usize;
    outcome(
        linear_bad == 0 && order_bad == 0 && iff_bad == 0,
        format!(
            "{} queries: linearity violations {linear_bad}, max>sum {order_bad}, \
             equality-iff violations {iff_bad} ({equal} equal, {single_cloud} single-cloud)",
            workload.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("partition-count formula", partition_count_formula),
        ("superset invariant", superset_invariant),
        ("knapsack exactness", dp_exactness),
        ("placement optimality gap", oracle_gap),
        ("partition-count sweep trends", sweep_trends),
        ("calibration recovery", calibration_recovery),
        ("crypto", crypto),
        ("cost-model algebra", cost_algebra),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let verdict = match (o.pass, KNOWN_GAPS.contains(&name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                failed.push(name);
                "FAIL"
            }
        };
        println!("{verdict:<16} {name} [{:.1}s]: {}", start.elapsed().as_secs_f64(), o.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
