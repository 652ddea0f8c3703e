use std::collections::BTreeSet;
use std::sync::OnceLock;

use hcloud::bucketize::{build_scheme, MappedPredicate, PartitionConfig, SchemeRegistry};
use hcloud::catalog::{AttrRef, AttributeMeta, Cloud, ColumnStats, RelationStats};
use hcloud::costmodel::{CostMode, CostModel, CostWeights};
use hcloud::crypto::{decrypt_value, encrypt_value, SecretKey};
use hcloud::engine::{execute, place, ExecOptions, Stores};
use hcloud::partitioner::{css_hc, knapsack, random_subset, solve, Instance, Method, SeedStrategy};
use hcloud::queryir::{parse_query, plan_query, CompareOp, Predicate, Query};
use hcloud::value::{Datatype, Value};
use hcloud::workload::{compute_stats, generate_data, generate_workload, Dataset, GeneratorConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data() -> &'static (Dataset, Vec<Query>) {
    static DATA: OnceLock<(Dataset, Vec<Query>)> = OnceLock::new();
    DATA.get_or_init(|| {
        let config = GeneratorConfig {
            scale_factor: 0.0002,
            workload_size: 16,
            ..Default::default()
        };
        let d = generate_data(&config).unwrap();
        let w = generate_workload(&config, &d.catalog).unwrap();
        (d, w)
    })
}

fn key() -> SecretKey {
    SecretKey::from_bytes(&[3u8; 32]).unwrap()
}

fn int_scheme(min: i64, max: i64, distinct: u64, p: u32) -> hcloud::bucketize::BucketScheme {
    let meta = AttributeMeta {
        name: "a".into(),
        relation: "r".into(),
        datatype: Datatype::Integer,
        sensitive: true,
        size: 1,
        placement: Cloud::Public,
    };
    let stats = RelationStats {
        relation: "r".into(),
        row_count: distinct,
        columns: [(
            "a".to_string(),
            ColumnStats {
                distinct_count: distinct,
                min: Some(Value::Int(min)),
                max: Some(Value::Int(max)),
                byte_width: 8,
            },
        )]
        .into(),
    };
    build_scheme(&meta, &stats, p, b"k").unwrap()
}

fn op() -> impl Strategy<Value = CompareOp> {
    prop_oneof![
        Just(CompareOp::Eq),
        Just(CompareOp::Lt),
        Just(CompareOp::Le),
        Just(CompareOp::Gt),
        Just(CompareOp::Ge)
    ]
}

fn brute(sizes: &[u64], profits: &[f64], capacity: u64) -> f64 {
    (0u32..1 << sizes.len())
        .filter_map(|m| {
            let take: Vec<usize> = (0..sizes.len()).filter(|i| m >> i & 1 == 1).collect();
            let size: u64 = take.iter().map(|&i| sizes[i]).sum();
            (size <= capacity).then(|| take.iter().fold(0.0, |a, &i| a + profits[i]))
        })
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn mapped_selection_keeps_every_match(
        min in -1000i64..1000, span in 0i64..5000, p in 1u32..40,
        v in -7000i64..7000, lit in -7000i64..7000, op in op(),
    ) {
        let s = int_scheme(min, min + span, (span as u64 + 1).max(1), p);
        let registry = SchemeRegistry::from_schemes([s.clone()]);
        let pred = Predicate::Compare { attr: AttrRef::new("r", "a"), op, value: Value::Int(lit) };
        let MappedPredicate::Selection(m) = registry.map_condition(&pred).unwrap() else {
            panic!("sensitive attribute left unmapped");
        };
        if op.holds(&Value::Int(v), &Value::Int(lit)) {
            prop_assert!(m.identifier_set.contains(&s.map_value(&Value::Int(v))));
        }
    }

    #[test]
    fn partitions_are_monotone(min in -1000i64..1000, span in 0i64..5000, p in 1u32..40, a in -7000i64..7000, b in -7000i64..7000) {
        let s = int_scheme(min, min + span, span as u64 + 1, p);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.partition_of(&Value::Int(lo)) <= s.partition_of(&Value::Int(hi)));
        prop_assert!(s.partition_of(&Value::Int(hi)) < s.partition_count());
    }

    #[test]
    fn encryption_round_trips(x in any::<i64>(), t in ".{0,30}", d in -50_000i32..50_000) {
        let (ds, _) = data();
        let c = ds.catalog.with_sensitivity(&ds.catalog.attributes().iter().map(AttributeMeta::attr_ref).collect());
        let reg = SchemeRegistry::build(&c, PartitionConfig::default(), &key().ident_key()).unwrap();
        for (attr, v) in [
            ("l_orderkey", Value::Int(x)),
            ("l_extendedprice", Value::Decimal(x / 7)),
            ("l_comment", Value::Text(t.clone())),
            ("l_shipdate", Value::Date(d)),
        ] {
            let scheme = reg.get(&AttrRef::new("lineitem", attr)).unwrap();
            let e = encrypt_value(&key(), scheme, &v);
            prop_assert_eq!(decrypt_value(&key(), &e).unwrap(), v);
        }
    }

    #[test]
    fn knapsack_matches_exhaustive_search(
        items in prop::collection::vec((1u64..12, -40i32..200), 0..12), cap in 0u64..60,
    ) {
        let sizes: Vec<u64> = items.iter().map(|i| i.0).collect();
        let profits: Vec<f64> = items.iter().map(|i| i.1 as f64 / 4.0).collect();
        let (table, chosen) = knapsack(&sizes, &profits, cap).unwrap();
        let got = chosen.iter().fold(0.0, |a, &i| a + profits[i]);
        prop_assert!(chosen.iter().map(|&i| sizes[i]).sum::<u64>() <= cap);
        prop_assert_eq!(got, brute(&sizes, &profits, cap));
        for j in 1..=table.capacity() {
            prop_assert!(table.profit(table.items(), j) >= table.profit(table.items(), j - 1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_method_respects_capacity(fraction in 0.0f64..0.6, sensitive in 0.0f64..1.0, seed in any::<u64>()) {
        let (ds, workload) = data();
        let base = ds.catalog.all_public().with_sensitivity(&random_subset(&ds.catalog, sensitive, seed));
        let capacity = (base.total_size() as f64 * fraction) as u64;
        let c = base.with_capacity(capacity).unwrap();
        let model = CostModel::new(&c, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
        let inst = Instance::new(&model, workload, capacity);
        for m in [Method::Dp, Method::HcQuery, Method::HcSensitivity, Method::AllPublic] {
            let plan = solve(&inst, m, 50, seed).unwrap();
            prop_assert!(plan.private_size(&c) <= capacity, "{m}");
            prop_assert!(c.apply_placement(&plan).is_ok());
        }
    }

    #[test]
    fn hill_climbing_is_deterministic_and_never_worse(seed in any::<u64>(), by_query in any::<bool>()) {
        let (ds, workload) = data();
        let c = &ds.catalog;
        let model = CostModel::new(c, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
        let inst = Instance::new(&model, workload, c.capacity());
        let strategy = if by_query { SeedStrategy::Query } else { SeedStrategy::Sensitivity };
        let a = css_hc(&inst, strategy, 60, seed).unwrap();
        let b = css_hc(&inst, strategy, 60, seed).unwrap();
        prop_assert_eq!(&a.plan, &b.plan);
        prop_assert!(a.plan.achieved_cost <= a.seed_cost);
        prop_assert!(a.accepted.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn traces_add_up_and_threads_agree(fraction in 0.0f64..1.0, seed in any::<u64>()) {
        let (ds, workload) = data();
        let placed = place(&ds.catalog, random_subset(&ds.catalog, fraction, seed)).unwrap();
        let schemes = SchemeRegistry::build(&placed, PartitionConfig::default(), &key().ident_key()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stores = Stores::build(&ds.tables, &placed, &schemes, &key(), &mut rng).unwrap();
        let sequential = ExecOptions { parallel: false, ..Default::default() };
        for q in workload.iter().take(6) {
            let plan = plan_query(q, &placed, &schemes).unwrap();
            let (rs, t) = execute(&plan, &stores, &key(), &ExecOptions::default()).unwrap();
            let (rs2, t2) = execute(&plan, &stores, &key(), &sequential).unwrap();
            prop_assert_eq!(&rs.rows, &rs2.rows);
            prop_assert_eq!(t.total_secs, t2.total_secs);
            let public: f64 = t.public.iter().map(|s| s.bytes).sum();
            let private: f64 = t.private.iter().map(|s| s.bytes).sum();
            prop_assert_eq!(t.transfer_bytes, public);
            prop_assert_eq!(t.combine_input_bytes, public + private);
            let expected = t.public_secs().max(t.private_secs()) + t.transfer_secs + t.combine_secs;
            prop_assert!((t.total_secs - expected).abs() <= 1e-9 * expected.max(1.0));
            prop_assert_eq!(t.result_rows, rs.rows.len() as u64);
        }
    }
}

#[test]
fn printed_queries_parse_back() {
    let (ds, workload) = data();
    for q in workload {
        let again = parse_query(&q.to_sql(), &ds.catalog).unwrap();
        assert_eq!(again.projections, q.projections);
        assert_eq!(again.sources, q.sources);
        assert_eq!(again.predicates, q.predicates);
    }
}

#[test]
fn catalog_statistics_describe_the_data() {
    let (ds, _) = data();
    for (rel, table) in &ds.tables {
        let stats = ds.catalog.stats(rel).unwrap();
        assert_eq!(stats, &compute_stats(table));
        assert_eq!(stats.row_count as usize, table.len());
        for (name, col) in &table.columns {
            let s = stats.column(name).unwrap();
            let distinct: BTreeSet<String> = col.iter().map(Value::to_string).collect();
            assert_eq!(s.distinct_count as usize, distinct.len(), "{rel}.{name}");
            assert!(col.iter().all(|v| Some(v) >= s.min.as_ref() && Some(v) <= s.max.as_ref()));
        }
    }
}

#[test]
fn workload_generation_is_seeded() {
    let config = GeneratorConfig {
        scale_factor: 0.0002,
        workload_size: 400,
        ..Default::default()
    };
    let (ds, _) = data();
    let a = generate_workload(&config, &ds.catalog).unwrap();
    let b = generate_workload(&config, &ds.catalog).unwrap();
    assert_eq!(a, b);
    let mean = a.iter().map(|q| q.freq as f64).sum::<f64>() / a.len() as f64;
    assert!((450.0..=550.0).contains(&mean), "mean frequency {mean}");
    assert!(a.iter().all(|q| (1..=1000).contains(&q.freq)));
    let other = generate_workload(&GeneratorConfig { seed: 7, ..config }, &ds.catalog).unwrap();
    assert_ne!(a, other);
}

#[test]
fn data_generation_is_seeded() {
    let config = GeneratorConfig {
        scale_factor: 0.0002,
        ..Default::default()
    };
    let a = generate_data(&config).unwrap();
    let b = generate_data(&config).unwrap();
    assert_eq!(a.tables, b.tables);
    assert_eq!(a.catalog, b.catalog);
}
