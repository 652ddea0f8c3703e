//! Workload cost estimation and weight calibration.
//!
//! Every size is an estimated byte count (rows times row width), because the
//! weights are seconds per byte.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bucketize::{PartitionConfig, SchemeRegistry};
use crate::catalog::{AttrRef, Catalog, Cloud, TUPLE_ID_WIDTH};
use crate::crypto::ETUPLE_OVERHEAD;
use crate::error::{Error, Result};
use crate::partitioner::PlacementPlan;
use crate::queryir::{
    plan_query, CompareOp, Condition, Expr, JoinCondition, Predicate, Query, SubPlan,
};
use crate::value::Value;

/// Seconds per byte for each cost component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// Private-cloud processing.
    pub w1: f64,
    /// Public-cloud input scan.
    pub w2: f64,
    /// Public-to-private transfer.
    pub w3: f64,
    /// Combination at the private cloud, decryption and filtering included.
    pub w4: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w1: 0.000545146,
            w2: 0.000072686,
            w3: 0.000001488,
            w4: 0.0000041,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Validation(format!("weight {name} must be positive, got {w}")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let w: CostWeights =
            toml::from_str(text).map_err(|e| Error::Parse(format!("weights: {e}")))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("weights serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// How the public and private terms of one query combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Both terms added, as the cost algorithm is written.
    #[default]
    Sum,
    /// The slower cloud only, since both run in parallel.
    Max,
}

impl FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(CostMode::Sum),
            "max" => Ok(CostMode::Max),
            other => Err(Error::Validation(format!("cost mode must be sum or max, got {other}"))),
        }
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMode::Sum => "sum",
            CostMode::Max => "max",
        })
    }
}

/// Byte sizes feeding one query's cost.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuerySizes {
    /// Input bytes of each public sub-plan.
    pub public_input: Vec<f64>,
    /// Output bytes of each public sub-plan.
    pub public_output: Vec<f64>,
    /// Output bytes of each private sub-plan.
    pub private_output: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryCost {
    pub public_cost: f64,
    pub private_cost: f64,
    pub combine_cost: f64,
    pub freq: u64,
    /// Cost of one execution.
    pub cost: f64,
    /// `freq * cost`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub queries: Vec<QueryCost>,
    pub total: f64,
}

/// Applies the weights to one query's sizes.
pub fn query_cost(weights: &CostWeights, mode: CostMode, sizes: &QuerySizes, freq: u64) -> QueryCost {
    let public_cost: f64 = sizes
        .public_input
        .iter()
        .zip(&sizes.public_output)
        .map(|(l, tmp)| weights.w2 * l + weights.w3 * tmp)
        .sum();
    let private_cost: f64 = sizes.private_output.iter().map(|tmp| weights.w1 * tmp).sum();
    let combined: f64 =
        sizes.public_output.iter().sum::<f64>() + sizes.private_output.iter().sum::<f64>();
    let combine_cost = weights.w4 * combined;
    let cost = match mode {
        CostMode::Sum => public_cost + private_cost,
        CostMode::Max => public_cost.max(private_cost),
    } + combine_cost;
    QueryCost {
        public_cost,
        private_cost,
        combine_cost,
        freq,
        cost,
        total: freq as f64 * cost,
    }
}

/// Row and byte estimate of an operator's output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub rows: f64,
    /// Bytes per row.
    pub width: f64,
}

impl Estimate {
    pub fn bytes(&self) -> f64 {
        self.rows * self.width
    }
}

/// Selectivity of a literal predicate under uniformity.
pub fn selectivity(predicate: &Predicate, catalog: &Catalog) -> Result<f64> {
    let (attr, lo, hi) = match predicate {
        Predicate::EquiJoin(_) => return Ok(1.0),
        Predicate::Compare { attr, op, value } => {
            let stats = catalog.column_stats(attr)?;
            if *op == CompareOp::Eq {
                return Ok(1.0 / stats.distinct_count.max(1) as f64);
            }
            match value.ordinal() {
                None => return Ok(1.0 / 3.0),
                Some(x) => match op {
                    CompareOp::Lt => (attr, None, Some(x as f64 - 1.0)),
                    CompareOp::Le => (attr, None, Some(x as f64)),
                    CompareOp::Gt => (attr, Some(x as f64 + 1.0), None),
                    CompareOp::Ge => (attr, Some(x as f64), None),
                    CompareOp::Eq => unreachable!(),
                },
            }
        }
        Predicate::Between { attr, low, high } => match (low.ordinal(), high.ordinal()) {
            (Some(l), Some(h)) => (attr, Some(l as f64), Some(h as f64)),
            _ => return Ok(1.0 / 3.0),
        },
    };
    let stats = catalog.column_stats(attr)?;
    let (Some(min), Some(max)) = (
        stats.min.as_ref().and_then(Value::ordinal),
        stats.max.as_ref().and_then(Value::ordinal),
    ) else {
        return Ok(1.0 / 3.0);
    };
    let (min, max) = (min as f64, max as f64);
    let lo = lo.unwrap_or(min).max(min);
    let hi = hi.unwrap_or(max).min(max);
    if hi < lo {
        return Ok(0.0);
    }
    Ok(((hi - lo + 1.0) / (max - min + 1.0)).clamp(0.0, 1.0))
}

/// Cardinality and size estimation over sub-plans.
pub struct Estimator<'a> {
    pub catalog: &'a Catalog,
    pub schemes: &'a SchemeRegistry,
}

impl Estimator<'_> {
    fn column_width(&self, relation: &str, column: &str, cloud: Cloud) -> Result<f64> {
        let attr = AttrRef::new(relation, column);
        let meta = self.catalog.attribute_or_err(&attr)?;
        let plain = self.catalog.column_stats(&attr)?.byte_width as f64;
        Ok(if meta.sensitive && cloud == Cloud::Public {
            plain + ETUPLE_OVERHEAD as f64
        } else {
            plain
        })
    }

    fn distinct(&self, attr: &AttrRef, rows: f64) -> Result<f64> {
        let d = match self.catalog.column_stats(attr) {
            Ok(s) => s.distinct_count as f64,
            // Tuple ids are unique.
            Err(_) if self.catalog.tuple_id(&attr.relation) == Some(attr.attribute.as_str()) => {
                self.catalog.stats(&attr.relation)?.row_count as f64
            }
            Err(e) => return Err(e),
        };
        Ok(d.min(rows).max(1.0))
    }

    /// Output estimate and total scanned input bytes.
    pub fn estimate(&self, plan: &SubPlan) -> Result<(Estimate, f64)> {
        match plan {
            SubPlan::Scan {
                relation,
                cloud,
                columns,
            } => {
                let rows = self.catalog.stats(relation)?.row_count as f64;
                let mut width = TUPLE_ID_WIDTH as f64;
                for c in columns {
                    width += self.column_width(relation, c, *cloud)?;
                }
                let e = Estimate { rows, width };
                Ok((e, e.bytes()))
            }
            SubPlan::Select { input, condition } => {
                let (e, input_bytes) = self.estimate(input)?;
                let s = match condition {
                    Condition::Plain(p) => selectivity(p, self.catalog)?,
                    Condition::Mapped(m) => {
                        let scheme = self.schemes.get(&m.column).ok_or_else(|| {
                            Error::Planning(format!("no bucket scheme for {}", m.column))
                        })?;
                        (m.identifier_set.len() as f64 / scheme.partition_count() as f64).min(1.0)
                    }
                };
                Ok((
                    Estimate {
                        rows: e.rows * s,
                        width: e.width,
                    },
                    input_bytes,
                ))
            }
            SubPlan::Join { left, right, on } => {
                let (l, lb) = self.estimate(left)?;
                let (r, rb) = self.estimate(right)?;
                let mut rows = l.rows * r.rows;
                for c in on {
                    rows *= match c {
                        JoinCondition::Plain(k) => {
                            1.0 / self.distinct(&k.left, l.rows)?.max(self.distinct(&k.right, r.rows)?)
                        }
                        JoinCondition::Mapped(m) => {
                            let count = |a: &AttrRef| {
                                self.schemes
                                    .get(a)
                                    .map(|s| s.ids().len() as f64)
                                    .ok_or_else(|| Error::Planning(format!("no bucket scheme for {a}")))
                            };
                            (m.pairs.len() as f64 / (count(&m.left)? * count(&m.right)?)).min(1.0)
                        }
                    };
                }
                Ok((
                    Estimate {
                        rows,
                        width: l.width + r.width,
                    },
                    lb + rb,
                ))
            }
            SubPlan::Project { input, items } => {
                let (e, input_bytes) = self.estimate(input)?;
                let mut width = 0.0;
                for p in items {
                    width += match &p.expr {
                        Expr::Column(a) => {
                            self.catalog.column_stats(a)?.byte_width as f64
                        }
                        _ => 8.0,
                    };
                }
                Ok((Estimate { rows: e.rows, width }, input_bytes))
            }
        }
    }
}

/// Query-processing cost over placements of one catalog.
///
/// Bucket schemes are built once for every sensitive attribute; identifier
/// values do not affect cost, only their counts.
pub struct CostModel {
    base: Catalog,
    schemes: SchemeRegistry,
    pub weights: CostWeights,
    pub mode: CostMode,
}

impl CostModel {
    pub fn new(base: &Catalog, config: PartitionConfig, weights: CostWeights, mode: CostMode) -> Result<Self> {
        weights.validate()?;
        let schemes = SchemeRegistry::build(base, config, b"cost-model")?;
        Ok(Self {
            base: base.clone(),
            schemes,
            weights,
            mode,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.base
    }

    pub fn schemes(&self) -> &SchemeRegistry {
        &self.schemes
    }

    /// Sizes of one query under an already placed catalog.
    pub fn query_sizes(&self, query: &Query, placed: &Catalog) -> Result<QuerySizes> {
        let plan = plan_query(query, placed, &self.schemes)?;
        let est = Estimator {
            catalog: placed,
            schemes: &self.schemes,
        };
        let mut sizes = QuerySizes::default();
        for p in &plan.public {
            let (out, input) = est.estimate(p)?;
            sizes.public_input.push(input);
            sizes.public_output.push(out.bytes());
        }
        for p in &plan.private {
            sizes.private_output.push(est.estimate(p)?.0.bytes());
        }
        Ok(sizes)
    }

    /// Workload cost with `private` placed on the private cloud. Capacity is
    /// not checked here; callers decide feasibility.
    pub fn cost_of_private_set(&self, workload: &[Query], private: &BTreeSet<AttrRef>) -> Result<CostBreakdown> {
        let plan = PlacementPlan::from_private_set(&self.base, private.clone());
        let placed = self.base.with_capacity(u64::MAX)?.apply_placement(&plan)?;
        self.cost_on(workload, &placed)
    }

    pub fn qpc(&self, workload: &[Query], plan: &PlacementPlan) -> Result<CostBreakdown> {
        self.cost_of_private_set(workload, &plan.private_set)
    }

    /// Workload cost over a placed catalog.
    pub fn cost_on(&self, workload: &[Query], placed: &Catalog) -> Result<CostBreakdown> {
        let mut queries = Vec::with_capacity(workload.len());
        for q in workload {
            let sizes = self.query_sizes(q, placed)?;
            queries.push(query_cost(&self.weights, self.mode, &sizes, q.freq));
        }
        let total = queries.iter().map(|q| q.total).sum();
        Ok(CostBreakdown { queries, total })
    }
}

/// Bytes and seconds of one calibration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub seconds: f64,
    pub bytes: f64,
}

/// Workloads whose timings define the weights: a scan with a light filter,
/// a six-way join, a customer-order join and a plain lineitem-order join.
pub const CALIBRATION_QUERIES: [&str; 4] = [
    "SELECT l_returnflag, l_linestatus, l_quantity, l_extendedprice, l_discount, l_tax \
     FROM lineitem WHERE l_shipdate <= DATE '1998-09-02'",
    "SELECT n_name, l_extendedprice, l_discount FROM customer, orders, lineitem, supplier, nation, region \
     WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey AND l_suppkey = s_suppkey \
     AND c_nationkey = s_nationkey AND s_nationkey = n_nationkey AND n_regionkey = r_regionkey \
     AND r_name = 'ASIA' AND o_orderdate >= DATE '1994-01-01' AND o_orderdate < DATE '1995-01-01'",
    "SELECT c_custkey, o_orderkey FROM customer, orders WHERE c_custkey = o_custkey",
    "SELECT * FROM lineitem, orders WHERE l_orderkey = o_orderkey",
];

/// Lineitem split used to time the combination step: private columns, public
/// sensitive columns; the rest is public and not sensitive.
pub const COMBINE_PRIVATE: [&str; 6] = [
    "l_orderkey",
    "l_partkey",
    "l_quantity",
    "l_linestatus",
    "l_shipdate",
    "l_shipinstruct",
];
pub const COMBINE_PUBLIC_SENSITIVE: [&str; 5] = [
    "l_suppkey",
    "l_linenumber",
    "l_extendedprice",
    "l_commitdate",
    "l_shipmode",
];

/// Something that can time the calibration experiments.
pub trait CalibrationHarness {
    /// Runs `sql` with every attribute on `cloud`.
    fn run_on(&mut self, cloud: Cloud, sql: &str) -> Result<Measurement>;
    /// Ships the first `fraction` of lineitem from the public cloud.
    fn transfer(&mut self, fraction: f64) -> Result<Measurement>;
    /// Reassembles the first `fraction` of lineitem split across clouds.
    fn combine(&mut self, fraction: f64) -> Result<Measurement>;
}

fn per_byte(m: Measurement, what: &str) -> Result<f64> {
    if m.bytes <= 0.0 || !m.seconds.is_finite() || m.seconds < 0.0 {
        return Err(Error::Calibration(format!(
            "{what}: {} seconds over {} bytes",
            m.seconds, m.bytes
        )));
    }
    Ok(m.seconds / m.bytes)
}

/// Derives weights from timed runs. `w1` and `w2` sum time-per-byte over the
/// calibration queries; `w3` and `w4` average over ten prefixes of lineitem.
pub fn calibrate(h: &mut impl CalibrationHarness) -> Result<CostWeights> {
    let mut w1 = 0.0;
    let mut w2 = 0.0;
    for (i, sql) in CALIBRATION_QUERIES.iter().enumerate() {
        w1 += per_byte(h.run_on(Cloud::Private, sql)?, &format!("private query {}", i + 1))?;
        w2 += per_byte(h.run_on(Cloud::Public, sql)?, &format!("public query {}", i + 1))?;
    }
    let mut w3 = 0.0;
    let mut w4 = 0.0;
    for step in 1..=10 {
        let f = step as f64 / 10.0;
        w3 += per_byte(h.transfer(f)?, &format!("transfer {}%", step * 10))?;
        w4 += per_byte(h.combine(f)?, &format!("combine {}%", step * 10))?;
    }
    let w = CostWeights {
        w1,
        w2,
        w3: w3 / 10.0,
        w4: w4 / 10.0,
    };
    w.validate().map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn private_only_query_hand_arithmetic() {
        let sizes = QuerySizes {
            private_output: vec![1000.0],
            ..Default::default()
        };
        let c = query_cost(&CostWeights::default(), CostMode::Sum, &sizes, 1);
        assert!((c.cost - 0.549246).abs() < 1e-12, "{}", c.cost);
        assert_eq!(c.public_cost, 0.0);
    }

    #[test]
    fn max_mode_bounded_by_sum() {
        let sizes = QuerySizes {
            public_input: vec![5000.0],
            public_output: vec![300.0],
            private_output: vec![200.0],
        };
        let w = CostWeights::default();
        let s = query_cost(&w, CostMode::Sum, &sizes, 3);
        let m = query_cost(&w, CostMode::Max, &sizes, 3);
        assert!(m.cost < s.cost);
        assert_eq!(s.total, 3.0 * s.cost);
    }

    #[test]
    fn weights_file_round_trip() {
        let w = CostWeights::default();
        assert_eq!(CostWeights::from_toml_str(&w.to_toml_string()).unwrap(), w);
        assert!(CostWeights::from_toml_str("w1 = 0.0\nw2 = 1.0\nw3 = 1.0\nw4 = 1.0").is_err());
        assert!(CostWeights::from_toml_str("w1 = 1.0").is_err());
    }

    struct Fixed(f64, f64);

    impl CalibrationHarness for Fixed {
        fn run_on(&mut self, cloud: Cloud, _sql: &str) -> Result<Measurement> {
            let s = if cloud == Cloud::Private { self.0 } else { self.1 };
            Ok(Measurement {
                seconds: s * 100.0,
                bytes: 100.0,
            })
        }
        fn transfer(&mut self, f: f64) -> Result<Measurement> {
            Ok(Measurement {
                seconds: 2.0 * f,
                bytes: f,
            })
        }
        fn combine(&mut self, _f: f64) -> Result<Measurement> {
            Ok(Measurement {
                seconds: 0.0,
                bytes: 0.0,
            })
        }
    }

    #[test]
    fn calibration_aborts_on_empty_run() {
        assert!(matches!(calibrate(&mut Fixed(2.0, 1.0)), Err(Error::Calibration(_))));
    }
}
