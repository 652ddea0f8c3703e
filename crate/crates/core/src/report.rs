//! Workload runs and parameter sweeps: modeled cost next to simulated
//! execution time.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bucketize::{PartitionConfig, SchemeRegistry};
use crate::catalog::{Catalog, Cloud};
use crate::costmodel::{CostMode, CostModel, CostWeights};
use crate::crypto::SecretKey;
use crate::engine::{execute, place, ExecOptions, PlainTable, Stores};
use crate::error::{Error, Result};
use crate::partitioner::{all_private, solve, Instance, Method, PlacementPlan};
use crate::queryir::{plan_query, Query};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementSummary {
    pub public_attributes: usize,
    pub private_attributes: usize,
    pub public_size: u64,
    pub private_size: u64,
}

impl PlacementSummary {
    pub fn of(placed: &Catalog) -> Self {
        let mut s = PlacementSummary {
            public_attributes: 0,
            private_attributes: 0,
            public_size: 0,
            private_size: 0,
        };
        for a in placed.attributes() {
            match a.placement {
                Cloud::Public => {
                    s.public_attributes += 1;
                    s.public_size += a.size;
                }
                Cloud::Private => {
                    s.private_attributes += 1;
                    s.private_size += a.size;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport {
    pub index: usize,
    pub freq: u64,
    pub rows: u64,
    /// Modeled cost of one execution.
    pub modeled_cost: f64,
    /// Simulated seconds of one execution.
    pub measured_secs: f64,
    pub decrypts: u64,
}

/// One workload executed under one placement. Totals are
/// frequency-weighted sums over `queries`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub placement: PlacementSummary,
    pub queries: Vec<QueryReport>,
    pub total_modeled: f64,
    pub total_measured: f64,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let p = &self.placement;
        let mut out = format!(
            "placement: public {} attrs / {} units, private {} attrs / {} units\n",
            p.public_attributes, p.public_size, p.private_attributes, p.private_size
        );
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>9} {:>14} {:>14} {:>9}",
            "query", "freq", "rows", "modeled", "measured", "decrypts"
        );
        for q in &self.queries {
            let _ = writeln!(
                out,
                "{:>5} {:>6} {:>9} {:>14.6} {:>14.6} {:>9}",
                q.index, q.freq, q.rows, q.modeled_cost, q.measured_secs, q.decrypts
            );
        }
        let _ = writeln!(
            out,
            "total (freq-weighted): modeled {:.6}, measured {:.6}",
            self.total_modeled, self.total_measured
        );
        out
    }
}

/// Shared inputs of runs and sweeps.
pub struct Bench<'a> {
    pub catalog: &'a Catalog,
    pub tables: &'a BTreeMap<String, PlainTable>,
    pub workload: &'a [Query],
    pub key: &'a SecretKey,
    pub weights: CostWeights,
    pub mode: CostMode,
    pub options: ExecOptions,
    pub seed: u64,
    /// Hill-climbing iteration bound.
    pub bound: usize,
}

impl Bench<'_> {
    /// Executes the workload under `placed` and pairs each query's
    /// simulated time with its modeled cost.
    pub fn run(&self, placed: &Catalog, config: PartitionConfig) -> Result<RunReport> {
        let model = CostModel::new(placed, config, self.weights, self.mode)?;
        let modeled = model.cost_on(self.workload, placed)?;
        let schemes = SchemeRegistry::build(placed, config, &self.key.ident_key())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let stores = Stores::build(self.tables, placed, &schemes, self.key, &mut rng)?;
        let mut queries = Vec::with_capacity(self.workload.len());
        for (i, (q, cost)) in self.workload.iter().zip(&modeled.queries).enumerate() {
            let plan = plan_query(q, placed, &schemes)?;
            let (rs, trace) = execute(&plan, &stores, self.key, &self.options)?;
            queries.push(QueryReport {
                index: i,
                freq: q.freq,
                rows: rs.rows.len() as u64,
                modeled_cost: cost.cost,
                measured_secs: trace.total_secs,
                decrypts: trace.decrypt_count,
            });
        }
        let total_modeled = queries.iter().map(|q| q.freq as f64 * q.modeled_cost).sum();
        let total_measured = queries.iter().map(|q| q.freq as f64 * q.measured_secs).sum();
        Ok(RunReport {
            placement: PlacementSummary::of(placed),
            queries,
            total_modeled,
            total_measured,
        })
    }

    /// Solves for a placement. The all-private baseline ignores capacity.
    pub fn partition(&self, catalog: &Catalog, config: PartitionConfig, method: Method) -> Result<(PlacementPlan, Catalog)> {
        let model = CostModel::new(catalog, config, self.weights, self.mode)?;
        let inst = Instance::new(&model, self.workload, catalog.capacity());
        let plan = match method {
            Method::AllPrivate => all_private(&inst, true)?,
            m => solve(&inst, m, self.bound, self.seed)?,
        };
        let placed = place(catalog, plan.private_set.clone())?;
        Ok((plan, placed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    /// Partitions per sensitive attribute.
    Partitions,
    /// Private capacity as a fraction of the total size.
    Capacity,
    /// Fraction of attributes marked sensitive.
    Sensitivity,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Partitions => "P",
            Axis::Capacity => "W",
            Axis::Sensitivity => "S",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Partitions => vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            Axis::Capacity => vec![0.1, 0.2, 0.3, 0.4, 0.5],
            Axis::Sensitivity => vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P" | "PARTITIONS" => Ok(Axis::Partitions),
            "W" | "CAPACITY" => Ok(Axis::Capacity),
            "S" | "SENSITIVITY" => Ok(Axis::Sensitivity),
            _ => Err(Error::Validation(format!("unknown sweep axis {s:?} (expected P, W or S)"))),
        }
    }
}

/// Settings held fixed while one axis varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepBase {
    pub partitions: PartitionConfig,
    pub capacity_fraction: f64,
    pub sensitive_fraction: f64,
}

impl Default for SweepBase {
    fn default() -> Self {
        Self {
            partitions: PartitionConfig::default(),
            capacity_fraction: 0.3,
            sensitive_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub method: Method,
    pub private_attributes: usize,
    pub modeled_cost: f64,
    pub measured_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn series(&self, method: Method) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.method == method).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "{}\tmethod\tprivate_attributes\tmodeled_cost\tmeasured_secs\n",
            self.axis
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                p.value, p.method, p.private_attributes, p.modeled_cost, p.measured_secs
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6} {:>15} {:>8} {:>16} {:>16}\n",
            self.axis.name(),
            "method",
            "private",
            "modeled",
            "measured"
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:>6} {:>15} {:>8} {:>16.4} {:>16.4}",
                p.value, p.method, p.private_attributes, p.modeled_cost, p.measured_secs
            );
        }
        out
    }
}

/// Re-partitions and re-runs the workload at every axis value.
pub fn sweep(
    bench: &Bench,
    axis: Axis,
    values: &[f64],
    methods: &[Method],
    base: SweepBase,
) -> Result<SweepReport> {
    let mut points = Vec::new();
    for &v in values {
        let mut s = base;
        match axis {
            Axis::Partitions => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Validation(format!("partition count must be a positive integer, got {v}")));
                }
                s.partitions = PartitionConfig::uniform(v as u32);
            }
            Axis::Capacity => s.capacity_fraction = v,
            Axis::Sensitivity => s.sensitive_fraction = v,
        }
        let catalog = point_catalog(bench, &s)?;
        for &m in methods {
            let (_, placed) = bench.partition(&catalog, s.partitions, m)?;
            let run = bench.run(&placed, s.partitions)?;
            log::info!("{axis}={v} {m}: measured {:.4}", run.total_measured);
            points.push(SweepPoint {
                value: v,
                method: m,
                private_attributes: run.placement.private_attributes,
                modeled_cost: run.total_modeled,
                measured_secs: run.total_measured,
            });
        }
    }
    Ok(SweepReport { axis, points })
}

fn point_catalog(bench: &Bench, s: &SweepBase) -> Result<Catalog> {
    let sensitive = crate::partitioner::random_subset(bench.catalog, s.sensitive_fraction, bench.seed);
    let capacity = (bench.catalog.total_size() as f64 * s.capacity_fraction).floor() as u64;
    bench
        .catalog
        .all_public()
        .with_sensitivity(&sensitive)
        .with_capacity(capacity)
}

/// True when each value is at most `tolerance` (relative) above the one
/// before it.
pub fn non_increasing_within(xs: &[f64], tolerance: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] * (1.0 + tolerance))
}

/// True when every value lies within `tolerance` (relative) of the first.
pub fn constant_within(xs: &[f64], tolerance: f64) -> bool {
    xs.first()
        .is_none_or(|&x0| xs.iter().all(|&x| (x - x0).abs() <= tolerance * x0.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_helpers() {
        assert!(non_increasing_within(&[10.0, 10.5, 9.0], 0.1));
        assert!(!non_increasing_within(&[10.0, 11.5], 0.1));
        assert!(constant_within(&[5.0, 5.4, 4.6], 0.1));
        assert!(!constant_within(&[5.0, 6.0], 0.1));
        assert!(constant_within(&[], 0.1));
    }

    #[test]
    fn axis_parses() {
        assert_eq!("w".parse::<Axis>().unwrap(), Axis::Capacity);
        assert!("Q".parse::<Axis>().is_err());
    }
}
