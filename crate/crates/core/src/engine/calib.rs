//! Calibration experiments run on the local engine.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bucketize::{PartitionConfig, SchemeRegistry};
use crate::catalog::{AttrRef, Catalog, Cloud};
use crate::costmodel::{CalibrationHarness, Measurement, COMBINE_PRIVATE, COMBINE_PUBLIC_SENSITIVE};
use crate::crypto::SecretKey;
use crate::error::{Error, Result};
use crate::partitioner::PlacementPlan;
use crate::queryir::{parse_query, plan_query};

use super::exec::{execute, ExecOptions, ExecutionTrace};
use super::table::{PlainTable, Stores};

const CALIBRATION_RELATION: &str = "lineitem";

/// Times calibration workloads by executing them under the engine's
/// simulated clock.
pub struct EngineHarness<'a> {
    pub catalog: &'a Catalog,
    pub tables: &'a BTreeMap<String, PlainTable>,
    pub key: SecretKey,
    pub config: PartitionConfig,
    pub options: ExecOptions,
    pub seed: u64,
}

/// `catalog` with exactly `private` on the private cloud and no capacity
/// limit.
pub fn place(catalog: &Catalog, private: BTreeSet<AttrRef>) -> Result<Catalog> {
    catalog
        .with_capacity(u64::MAX)?
        .apply_placement(&PlacementPlan::from_private_set(catalog, private))
}

impl EngineHarness<'_> {
    fn run(
        &self,
        placed: &Catalog,
        tables: &BTreeMap<String, PlainTable>,
        sql: &str,
    ) -> Result<ExecutionTrace> {
        let schemes = SchemeRegistry::build(placed, self.config, &self.key.ident_key())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let stores = Stores::build(tables, placed, &schemes, &self.key, &mut rng)?;
        let query = parse_query(sql, placed)?;
        let plan = plan_query(&query, placed, &schemes)?;
        Ok(execute(&plan, &stores, &self.key, &self.options)?.1)
    }

    fn lineitem_prefix(&self, fraction: f64) -> Result<BTreeMap<String, PlainTable>> {
        let full = self.tables.get(CALIBRATION_RELATION).ok_or_else(|| {
            Error::Calibration(format!("no {CALIBRATION_RELATION} data to calibrate with"))
        })?;
        let n = ((full.len() as f64) * fraction).ceil() as usize;
        let mut t = self.tables.clone();
        t.insert(CALIBRATION_RELATION.into(), full.prefix(n));
        Ok(t)
    }

    fn lineitem_set(&self, names: &[&str]) -> BTreeSet<AttrRef> {
        names
            .iter()
            .map(|n| AttrRef::new(CALIBRATION_RELATION, *n))
            .collect()
    }
}

impl CalibrationHarness for EngineHarness<'_> {
    fn run_on(&mut self, cloud: Cloud, sql: &str) -> Result<Measurement> {
        let plain = self.catalog.with_sensitivity(&BTreeSet::new());
        let private = match cloud {
            Cloud::Private => plain.attributes().iter().map(|a| a.attr_ref()).collect(),
            Cloud::Public => BTreeSet::new(),
        };
        let placed = place(&plain, private)?;
        let trace = self.run(&placed, self.tables, sql)?;
        let (stages, secs) = match cloud {
            Cloud::Public => (&trace.public, trace.public_secs()),
            Cloud::Private => (&trace.private, trace.private_secs()),
        };
        Ok(Measurement {
            seconds: secs,
            bytes: stages.iter().map(|s| s.bytes).sum(),
        })
    }

    fn transfer(&mut self, fraction: f64) -> Result<Measurement> {
        let tables = self.lineitem_prefix(fraction)?;
        let placed = place(&self.catalog.with_sensitivity(&BTreeSet::new()), BTreeSet::new())?;
        let trace = self.run(&placed, &tables, &format!("SELECT * FROM {CALIBRATION_RELATION}"))?;
        Ok(Measurement {
            seconds: trace.transfer_secs,
            bytes: trace.transfer_bytes,
        })
    }

    fn combine(&mut self, fraction: f64) -> Result<Measurement> {
        let tables = self.lineitem_prefix(fraction)?;
        let private = self.lineitem_set(&COMBINE_PRIVATE);
        let mut sensitive = private.clone();
        sensitive.extend(self.lineitem_set(&COMBINE_PUBLIC_SENSITIVE));
        let placed = place(&self.catalog.with_sensitivity(&sensitive), private)?;
        let trace = self.run(&placed, &tables, &format!("SELECT * FROM {CALIBRATION_RELATION}"))?;
        Ok(Measurement {
            seconds: trace.combine_secs,
            bytes: trace.combine_input_bytes,
        })
    }
}
