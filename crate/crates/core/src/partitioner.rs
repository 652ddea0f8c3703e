//! Choosing which attributes live on the private cloud.
//!
//! The dynamic program treats the problem as a 0/1 knapsack over
//! per-attribute profits; hill climbing searches placements directly under
//! the full cost model; the exhaustive search is the reference for small
//! instances.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{AttrRef, AttributeMeta, Catalog};
use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::queryir::Query;

/// Largest instance the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;
/// Retries when a random swap would overflow the private cloud.
pub const SWAP_RETRIES: usize = 100;
/// Largest dynamic-programming table, in cells.
pub const DP_CELL_LIMIT: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dp,
    HcQuery,
    HcSensitivity,
    BruteForce,
    AllPublic,
    AllPrivate,
    /// Supplied by the caller rather than computed.
    Manual,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Dp,
        Method::HcQuery,
        Method::HcSensitivity,
        Method::BruteForce,
        Method::AllPublic,
        Method::AllPrivate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dp => "dp",
            Method::HcQuery => "hc-query",
            Method::HcSensitivity => "hc-sensitivity",
            Method::BruteForce => "brute-force",
            Method::AllPublic => "all-public",
            Method::AllPrivate => "all-private",
            Method::Manual => "manual",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(Method::BruteForce),
            _ => Method::ALL
                .into_iter()
                .chain([Method::Manual])
                .find(|m| m.name() == s)
                .ok_or_else(|| Error::Validation(format!("unknown partitioning method {s}"))),
        }
    }
}

/// A split of every attribute between the clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub private_set: BTreeSet<AttrRef>,
    pub public_set: BTreeSet<AttrRef>,
    pub achieved_cost: f64,
    pub method: Method,
}

impl PlacementPlan {
    /// `private` on the private cloud, everything else public. The cost is
    /// left at zero.
    pub fn from_private_set(catalog: &Catalog, private: BTreeSet<AttrRef>) -> Self {
        let public_set = catalog
            .attributes()
            .iter()
            .map(AttributeMeta::attr_ref)
            .filter(|a| !private.contains(a))
            .collect();
        Self {
            private_set: private,
            public_set,
            achieved_cost: 0.0,
            method: Method::Manual,
        }
    }

    pub fn private_size(&self, catalog: &Catalog) -> u64 {
        self.private_set
            .iter()
            .filter_map(|a| catalog.attribute(a))
            .map(|m| m.size)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// One placement problem: a cost model, its workload and a capacity.
pub struct Instance<'a> {
    pub model: &'a CostModel,
    pub workload: &'a [Query],
    pub capacity: u64,
    cache: Mutex<HashMap<BTreeSet<AttrRef>, f64>>,
}

impl<'a> Instance<'a> {
    pub fn new(model: &'a CostModel, workload: &'a [Query], capacity: u64) -> Self {
        Self {
            model,
            workload,
            capacity,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn attributes(&self) -> &[AttributeMeta] {
        self.model.catalog().attributes()
    }

    fn size_of(&self, set: &BTreeSet<AttrRef>) -> u64 {
        set.iter()
            .filter_map(|a| self.model.catalog().attribute(a))
            .map(|m| m.size)
            .sum()
    }

    /// Workload cost with `private` on the private cloud.
    pub fn cost(&self, private: &BTreeSet<AttrRef>) -> Result<f64> {
        if let Some(c) = self.cache.lock().expect("cache lock").get(private) {
            return Ok(*c);
        }
        let c = self.model.cost_of_private_set(self.workload, private)?.total;
        self.cache.lock().expect("cache lock").insert(private.clone(), c);
        Ok(c)
    }

    fn plan(&self, private: BTreeSet<AttrRef>, method: Method) -> Result<PlacementPlan> {
        let mut plan = PlacementPlan::from_private_set(self.model.catalog(), private);
        plan.achieved_cost = self.cost(&plan.private_set)?;
        plan.method = method;
        Ok(plan)
    }
}

/// Baseline cost and the profit of moving each attribute private alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Profits {
    pub baseline: f64,
    /// Parallel to the catalog's attribute list.
    pub profits: Vec<f64>,
}

pub fn attribute_profits(inst: &Instance) -> Result<Profits> {
    let baseline = inst.cost(&BTreeSet::new())?;
    let profits = inst
        .attributes()
        .par_iter()
        .map(|a| Ok(baseline - inst.cost(&[a.attr_ref()].into())?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Profits { baseline, profits })
}

/// Knapsack table: `profit(i, j)` is the best profit using the first `i`
/// items within capacity `j`.
#[derive(Debug, Clone)]
pub struct DpTable {
    cells: Vec<f64>,
    take: Vec<bool>,
    width: usize,
}

impl DpTable {
    pub fn profit(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    pub fn items(&self) -> usize {
        self.cells.len() / self.width - 1
    }

    pub fn capacity(&self) -> usize {
        self.width - 1
    }
}

/// 0/1 knapsack by dynamic programming. Returns the table and the chosen
/// item indices recovered by backtracking from the full-capacity cell.
pub fn knapsack(sizes: &[u64], profits: &[f64], capacity: u64) -> Result<(DpTable, Vec<usize>)> {
    assert_eq!(sizes.len(), profits.len());
    let n = sizes.len();
    let cells = (n as u64 + 1).saturating_mul(capacity.saturating_add(1));
    if cells > DP_CELL_LIMIT {
        return Err(Error::Planning(format!(
            "knapsack table of {cells} cells; use a coarser size unit"
        )));
    }
    let w = capacity as usize;
    let width = w + 1;
    let mut t = DpTable {
        cells: vec![0.0; (n + 1) * width],
        take: vec![false; (n + 1) * width],
        width,
    };
    for i in 1..=n {
        let size = sizes[i - 1];
        for j in 1..=w {
            let skip = t.cells[(i - 1) * width + j];
            let at = i * width + j;
            if size <= j as u64 {
                let with = profits[i - 1] + t.cells[(i - 1) * width + j - size as usize];
                if with > skip {
                    t.cells[at] = with;
                    t.take[at] = true;
                    continue;
                }
            }
            t.cells[at] = skip;
        }
    }
    let mut chosen = Vec::new();
    let mut j = w;
    for i in (1..=n).rev() {
        if t.take[i * width + j] {
            chosen.push(i - 1);
            j -= sizes[i - 1] as usize;
        }
    }
    chosen.reverse();
    Ok((t, chosen))
}

/// Dynamic-programming placement over single-attribute profits.
pub fn css_dp(inst: &Instance) -> Result<PlacementPlan> {
    let profits = attribute_profits(inst)?;
    let sizes: Vec<u64> = inst.attributes().iter().map(|a| a.size).collect();
    let (_, chosen) = knapsack(&sizes, &profits.profits, inst.capacity)?;
    let private = chosen.iter().map(|&i| inst.attributes()[i].attr_ref()).collect();
    inst.plan(private, Method::Dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStrategy {
    /// Attributes the workload references.
    Query,
    /// Sensitive attributes.
    Sensitivity,
}

/// Result of a hill-climbing run.
#[derive(Debug, Clone)]
pub struct HcOutcome {
    pub plan: PlacementPlan,
    pub seed_cost: f64,
    /// Cost after each accepted move.
    pub accepted: Vec<f64>,
}

/// Greedy start: candidates by descending profit per size unit while they
/// fit.
pub fn greedy_seed(inst: &Instance, strategy: SeedStrategy) -> Result<BTreeSet<AttrRef>> {
    let referenced: BTreeSet<AttrRef> = inst
        .workload
        .iter()
        .flat_map(Query::referenced_attrs)
        .collect();
    let profits = attribute_profits(inst)?;
    let mut candidates: Vec<(usize, f64)> = inst
        .attributes()
        .iter()
        .enumerate()
        .filter(|(_, a)| match strategy {
            SeedStrategy::Query => referenced.contains(&a.attr_ref()),
            SeedStrategy::Sensitivity => a.sensitive,
        })
        .map(|(i, a)| (i, profits.profits[i] / (a.size.max(1) as f64)))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used = 0u64;
    let mut private = BTreeSet::new();
    for (i, _) in candidates {
        let a = &inst.attributes()[i];
        if used + a.size <= inst.capacity {
            used += a.size;
            private.insert(a.attr_ref());
        }
    }
    Ok(private)
}

/// Hill climbing from a greedy seed. Each step exchanges a random public
/// attribute with a random private one (either side may be empty, which
/// makes the step a single move) and keeps the result only if the cost
/// strictly drops.
pub fn css_hc(inst: &Instance, strategy: SeedStrategy, bound: usize, rng_seed: u64) -> Result<HcOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut private = greedy_seed(inst, strategy)?;
    let seed_cost = inst.cost(&private)?;
    let mut best = seed_cost;
    let mut accepted = Vec::new();
    let all: Vec<AttrRef> = inst.attributes().iter().map(AttributeMeta::attr_ref).collect();
    for _ in 0..bound {
        let Some(candidate) = random_neighbor(inst, &all, &private, &mut rng) else {
            continue;
        };
        let c = inst.cost(&candidate)?;
        if c < best {
            best = c;
            private = candidate;
            accepted.push(c);
        }
    }
    let method = match strategy {
        SeedStrategy::Query => Method::HcQuery,
        SeedStrategy::Sensitivity => Method::HcSensitivity,
    };
    Ok(HcOutcome {
        plan: inst.plan(private, method)?,
        seed_cost,
        accepted,
    })
}

fn random_neighbor(
    inst: &Instance,
    all: &[AttrRef],
    private: &BTreeSet<AttrRef>,
    rng: &mut ChaCha8Rng,
) -> Option<BTreeSet<AttrRef>> {
    let public: Vec<&AttrRef> = all.iter().filter(|a| !private.contains(*a)).collect();
    let privs: Vec<&AttrRef> = private.iter().collect();
    for _ in 0..SWAP_RETRIES {
        // Index len() stands for "nothing" on that side.
        let u = rng.gen_range(0..=public.len());
        let v = rng.gen_range(0..=privs.len());
        if u == public.len() && v == privs.len() {
            continue;
        }
        let mut next = private.clone();
        if let Some(a) = public.get(u) {
            next.insert((*a).clone());
        }
        if let Some(a) = privs.get(v) {
            next.remove(*a);
        }
        if inst.size_of(&next) <= inst.capacity {
            return Some(next);
        }
    }
    None
}

/// Exhaustive search over every feasible private set.
pub fn brute_force_optimum(inst: &Instance) -> Result<PlacementPlan> {
    let n = inst.attributes().len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(n, BRUTE_FORCE_LIMIT));
    }
    let attrs = inst.attributes();
    let best = (0u32..(1u32 << n))
        .into_par_iter()
        .filter_map(|mask| {
            let set: BTreeSet<AttrRef> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| attrs[i].attr_ref())
                .collect();
            (inst.size_of(&set) <= inst.capacity).then_some((mask, set))
        })
        .map(|(mask, set)| inst.model.cost_of_private_set(inst.workload, &set).map(|c| (c.total, mask, set)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("empty set is always feasible");
    inst.plan(best.2, Method::BruteForce)
}

pub fn all_public(inst: &Instance) -> Result<PlacementPlan> {
    inst.plan(BTreeSet::new(), Method::AllPublic)
}

/// Everything private. Fails if that exceeds the capacity unless `relaxed`,
/// which is how the baseline is reported.
pub fn all_private(inst: &Instance, relaxed: bool) -> Result<PlacementPlan> {
    let all: BTreeSet<AttrRef> = inst.attributes().iter().map(AttributeMeta::attr_ref).collect();
    let used = inst.size_of(&all);
    if !relaxed && used > inst.capacity {
        return Err(Error::Capacity {
            used,
            capacity: inst.capacity,
        });
    }
    inst.plan(all, Method::AllPrivate)
}

/// Runs one method. Hill climbing uses `bound` and `rng_seed`.
pub fn solve(inst: &Instance, method: Method, bound: usize, rng_seed: u64) -> Result<PlacementPlan> {
    match method {
        Method::Dp => css_dp(inst),
        Method::HcQuery => Ok(css_hc(inst, SeedStrategy::Query, bound, rng_seed)?.plan),
        Method::HcSensitivity => Ok(css_hc(inst, SeedStrategy::Sensitivity, bound, rng_seed)?.plan),
        Method::BruteForce => brute_force_optimum(inst),
        Method::AllPublic => all_public(inst),
        Method::AllPrivate => all_private(inst, false),
        Method::Manual => Err(Error::Validation("manual plans are supplied, not solved".into())),
    }
}

/// Random subset for tests and sweeps: each attribute independently with
/// probability `fraction`, deterministic under `seed`.
pub fn random_subset(catalog: &Catalog, fraction: f64, seed: u64) -> BTreeSet<AttrRef> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs: Vec<AttrRef> = catalog.attributes().iter().map(AttributeMeta::attr_ref).collect();
    attrs.shuffle(&mut rng);
    let k = (attrs.len() as f64 * fraction).round() as usize;
    attrs.into_iter().take(k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knapsack_small() {
        let (t, chosen) = knapsack(&[2, 3, 4], &[3.0, 4.0, 5.5], 5).unwrap();
        assert_eq!(chosen, vec![0, 1]);
        assert_eq!(t.profit(3, 5), 7.0);
        let (_, none) = knapsack(&[1, 1], &[-1.0, -2.0], 5).unwrap();
        assert!(none.is_empty());
        let (_, zero) = knapsack(&[1], &[9.0], 0).unwrap();
        assert!(zero.is_empty());
    }

    #[test]
    fn knapsack_table_is_monotone_in_capacity() {
        let (t, _) = knapsack(&[3, 1, 4, 1, 5], &[2.0, -1.0, 3.5, 0.5, 4.0], 9).unwrap();
        for i in 0..=t.items() {
            for j in 0..t.capacity() {
                assert!(t.profit(i, j) <= t.profit(i, j + 1));
            }
            assert_eq!(t.profit(i, 0), 0.0);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("brute".parse::<Method>().unwrap(), Method::BruteForce);
        assert!("greedy".parse::<Method>().is_err());
    }
}
