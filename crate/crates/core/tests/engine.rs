use std::collections::BTreeSet;

use hcloud::bucketize::{PartitionConfig, SchemeRegistry};
use hcloud::catalog::{AttrRef, Catalog};
use hcloud::costmodel::{CostMode, CostModel, CostWeights};
use hcloud::crypto::SecretKey;
use hcloud::engine::{execute, ground_truth, place, ExecOptions, Stores};
use hcloud::partitioner::{css_dp, Instance};
use hcloud::queryir::{parse_query, plan_query, Query};
use hcloud::workload::{generate_data, generate_workload, Dataset, GeneratorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

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

fn check(data: &Dataset, placed: &Catalog, queries: &[Query], config: PartitionConfig) {
    let key = SecretKey::from_bytes(&[7u8; 32]).unwrap();
    let schemes = SchemeRegistry::build(placed, config, &key.ident_key()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stores = Stores::build(&data.tables, placed, &schemes, &key, &mut rng).unwrap();
    for q in queries {
        let plan = plan_query(q, placed, &schemes).unwrap();
        let (rs, _) = execute(&plan, &stores, &key, &ExecOptions::default())
            .unwrap_or_else(|e| panic!("{}: {e}\n{plan}", q.to_sql()));
        let expected = ground_truth(q, placed, &data.tables).unwrap();
        assert_eq!(rs.sorted().rows, expected, "{}\n{plan}", q.to_sql());
    }
}

#[test]
fn workload_matches_oracle_under_mixed_placements() {
    let (data, workload) = dataset(0.0002, 12);
    let c = &data.catalog;
    check(&data, &place(c, BTreeSet::new()).unwrap(), &workload, PartitionConfig::default());
    let everything = c.attributes().iter().map(|a| a.attr_ref()).collect();
    check(&data, &place(c, everything).unwrap(), &workload, PartitionConfig::default());
    let model = CostModel::new(c, PartitionConfig::default(), CostWeights::default(), CostMode::Sum).unwrap();
    let inst = Instance::new(&model, &workload, c.capacity());
    let plan = css_dp(&inst).unwrap();
    check(&data, &c.apply_placement(&plan).unwrap(), &workload, PartitionConfig::default());
}

#[test]
fn single_bucket_schemes_stay_exact() {
    let (data, workload) = dataset(0.0002, 6);
    let c = &data.catalog;
    let half: BTreeSet<AttrRef> = c
        .attributes()
        .iter()
        .filter(|a| a.relation == "orders")
        .map(|a| a.attr_ref())
        .collect();
    check(&data, &place(c, half).unwrap(), &workload, PartitionConfig::uniform(1));
}

#[test]
fn public_plain_query_decrypts_nothing() {
    let (data, _) = dataset(0.0002, 0);
    let placed = place(&data.catalog.with_sensitivity(&BTreeSet::new()), BTreeSet::new()).unwrap();
    let key = SecretKey::from_bytes(&[7u8; 32]).unwrap();
    let schemes = SchemeRegistry::build(&placed, PartitionConfig::default(), &key.ident_key()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stores = Stores::build(&data.tables, &placed, &schemes, &key, &mut rng).unwrap();
    let q = parse_query("SELECT l_orderkey FROM lineitem WHERE l_quantity < 10", &placed).unwrap();
    let plan = plan_query(&q, &placed, &schemes).unwrap();
    let (_, trace) = execute(&plan, &stores, &key, &ExecOptions::default()).unwrap();
    assert_eq!(trace.decrypt_count, 0);
    assert!(trace.private.is_empty());
}
