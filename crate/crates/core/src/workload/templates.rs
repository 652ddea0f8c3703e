use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::value::{format_decimal, format_days, parse_date};

use super::data::{END_DATE, MKT_SEGMENTS, RETURN_FLAGS, START_DATE};
use super::GeneratorConfig;

/// Stream separation from the data generator under the same seed.
const WORKLOAD_STREAM: u64 = 0x5157_4f52_4b4c_4f41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// Pricing summary scan over line items.
    Q1,
    /// Shipping priority: customer, orders, line items.
    Q3,
    /// Forecast revenue: one-table range scan.
    Q6,
    /// Returned items: customer, orders, line items, nation.
    Q10,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::Q1, Template::Q3, Template::Q6, Template::Q10];
}

struct Dates {
    start: i32,
    end: i32,
}

impl Dates {
    fn any(&self, rng: &mut ChaCha8Rng) -> i32 {
        rng.gen_range(self.start..=self.end)
    }

    /// A window of `days` starting anywhere, clipped to the domain.
    fn window(&self, rng: &mut ChaCha8Rng, days: i32) -> (i32, i32) {
        let lo = self.any(rng);
        (lo, (lo + days).min(self.end))
    }
}

fn lit(d: i32) -> String {
    format!("DATE '{}'", format_days(d))
}

/// One instantiated template.
pub fn instantiate(template: Template, rng: &mut ChaCha8Rng) -> Result<String> {
    let dates = Dates {
        start: parse_date(START_DATE)?,
        end: parse_date(END_DATE)?,
    };
    Ok(match template {
        Template::Q1 => format!(
            "SELECT l_returnflag, l_linestatus, l_quantity, l_extendedprice, l_discount, \
             l_extendedprice * (1 - l_discount) AS disc_price, \
             l_extendedprice * (1 - l_discount) * (1 + l_tax) AS charge \
             FROM lineitem WHERE l_shipdate <= {}",
            lit(dates.any(rng))
        ),
        Template::Q3 => {
            let d = dates.any(rng);
            format!(
                "SELECT l_orderkey, l_extendedprice * (1 - l_discount) AS revenue, \
                 o_orderdate, o_shippriority \
                 FROM customer, orders, lineitem \
                 WHERE c_mktsegment = '{}' AND c_custkey = o_custkey \
                 AND l_orderkey = o_orderkey AND o_orderdate < {} AND l_shipdate > {}",
                MKT_SEGMENTS.choose(rng).expect("segments"),
                lit(d),
                lit(d)
            )
        }
        Template::Q6 => {
            let (lo, hi) = dates.window(rng, 365);
            let d1 = rng.gen_range(0..=10);
            let d2 = rng.gen_range(d1..=10);
            format!(
                "SELECT l_extendedprice * l_discount AS revenue FROM lineitem \
                 WHERE l_shipdate >= {} AND l_shipdate < {} \
                 AND l_discount BETWEEN {} AND {} AND l_quantity < {}",
                lit(lo),
                lit(hi),
                format_decimal(d1),
                format_decimal(d2),
                rng.gen_range(1..=50)
            )
        }
        Template::Q10 => {
            let (lo, hi) = dates.window(rng, 91);
            format!(
                "SELECT c_custkey, c_name, l_extendedprice * (1 - l_discount) AS revenue, \
                 c_acctbal, n_name, c_address, c_phone \
                 FROM customer, orders, lineitem, nation \
                 WHERE c_custkey = o_custkey AND l_orderkey = o_orderkey \
                 AND o_orderdate >= {} AND o_orderdate < {} \
                 AND l_returnflag = '{}' AND c_nationkey = n_nationkey",
                lit(lo),
                lit(hi),
                RETURN_FLAGS.choose(rng).expect("flags")
            )
        }
    })
}

/// Workload file text: one statement per query, each preceded by its
/// frequency comment.
pub fn generate_workload_sql(config: &GeneratorConfig) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ WORKLOAD_STREAM);
    let mut out = String::new();
    for _ in 0..config.workload_size {
        let template = *Template::ALL.choose(&mut rng).expect("templates");
        let sql = instantiate(template, &mut rng)?;
        let freq: u64 = rng.gen_range(1..=1000);
        let _ = writeln!(out, "-- freq: {freq}\n{sql};\n");
    }
    Ok(out)
}
