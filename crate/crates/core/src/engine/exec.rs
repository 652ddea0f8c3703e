use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bucketize::PartitionId;
use crate::catalog::{AttrRef, Cloud, TUPLE_ID_WIDTH};
use crate::costmodel::CostWeights;
use crate::crypto::{Cipher, ETuple, SecretKey};
use crate::error::{Error, Result};
use crate::queryir::{
    Condition, HybridPlan, JoinCondition, JoinKey, PostNode, Predicate, Projection, SubPlan,
};
use crate::value::Value;

use super::table::{ColumnData, Store, Stores, Table};

/// Largest intermediate result, in rows.
pub const MAX_INTERMEDIATE_ROWS: usize = 50_000_000;

const RESULT_RELATION: &str = "#result";

/// Seconds per processed byte of each simulated resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub public: f64,
    pub private: f64,
    pub link: f64,
    pub combine: f64,
}

impl Default for SimProfile {
    fn default() -> Self {
        SimProfile::from_weights(&CostWeights::default())
    }
}

impl SimProfile {
    pub fn from_weights(w: &CostWeights) -> Self {
        Self {
            public: w.w2,
            private: w.w1,
            link: w.w3,
            combine: w.w4,
        }
    }

    /// Private processing `ratio` times slower than public, other rates
    /// from the default weights.
    pub fn with_private_ratio(ratio: f64) -> Self {
        let mut p = SimProfile::default();
        p.private = p.public * ratio;
        p
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub profile: SimProfile,
    /// Run the two clouds' sub-plans on separate threads.
    pub parallel: bool,
    pub max_rows: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            profile: SimProfile::default(),
            parallel: true,
            max_rows: MAX_INTERMEDIATE_ROWS,
        }
    }
}

/// One sub-plan's execution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTrace {
    pub rows: u64,
    /// Output bytes.
    pub bytes: f64,
    /// Scanned bytes plus every operator's output bytes.
    pub processed_bytes: f64,
    pub simulated_secs: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub public: Vec<StageTrace>,
    pub private: Vec<StageTrace>,
    pub transfer_bytes: f64,
    pub transfer_secs: f64,
    pub decrypt_count: u64,
    pub decrypt_wall_secs: f64,
    /// Public plus private intermediate bytes.
    pub combine_input_bytes: f64,
    pub combine_secs: f64,
    pub result_rows: u64,
    /// Slower cloud, then transfer, then combination.
    pub total_secs: f64,
    pub wall_secs: f64,
}

impl ExecutionTrace {
    pub fn public_secs(&self) -> f64 {
        self.public.iter().map(|s| s.simulated_secs).sum()
    }

    pub fn private_secs(&self) -> f64 {
        self.private.iter().map(|s| s.simulated_secs).sum()
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, stages) in [("public", &self.public), ("private", &self.private)] {
            for (i, s) in stages.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{name}[{i}]: rows={} bytes={:.0} processed={:.0} sim={:.6}s wall={:.6}s",
                    s.rows, s.bytes, s.processed_bytes, s.simulated_secs, s.wall_secs
                );
            }
        }
        let _ = writeln!(
            out,
            "transfer: bytes={:.0} sim={:.6}s",
            self.transfer_bytes, self.transfer_secs
        );
        let _ = writeln!(
            out,
            "combine: input_bytes={:.0} decrypts={} decrypt_wall={:.6}s sim={:.6}s",
            self.combine_input_bytes, self.decrypt_count, self.decrypt_wall_secs, self.combine_secs
        );
        let _ = writeln!(
            out,
            "result: rows={} total_sim={:.6}s wall={:.6}s",
            self.result_rows, self.total_secs, self.wall_secs
        );
        out
    }
}

/// Final rows with their column names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultSet {
    pub fn sorted(mut self) -> Self {
        self.rows.sort();
        self
    }
}

#[derive(Debug, Clone)]
struct Source {
    table: Arc<Table>,
    /// Visible column indices.
    cols: Vec<usize>,
    /// Decrypted replacements for encrypted columns, by column index.
    decrypted: BTreeMap<usize, Arc<Vec<Option<Value>>>>,
}

impl Source {
    fn width(&self) -> f64 {
        TUPLE_ID_WIDTH as f64 + self.cols.iter().map(|&c| self.table.widths[c]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
enum Loc {
    Tid(usize),
    Col(usize, usize),
}

/// Intermediate result: tuples of row indices into source tables.
#[derive(Debug, Clone)]
struct Inter {
    sources: Vec<Source>,
    rows: Vec<u32>,
}

impl Inter {
    fn stride(&self) -> usize {
        self.sources.len()
    }

    fn len(&self) -> usize {
        self.rows.len() / self.stride().max(1)
    }

    fn bytes(&self) -> f64 {
        self.len() as f64 * self.sources.iter().map(Source::width).sum::<f64>()
    }

    fn row(&self, i: usize) -> &[u32] {
        let s = self.stride();
        &self.rows[i * s..(i + 1) * s]
    }

    fn locate(&self, a: &AttrRef) -> Result<Loc> {
        for (si, s) in self.sources.iter().enumerate() {
            if s.table.relation != a.relation {
                continue;
            }
            if s.table.tuple_id == a.attribute {
                return Ok(Loc::Tid(si));
            }
            if let Some(c) = s.cols.iter().copied().find(|&c| s.table.columns[c].0 == a.attribute) {
                return Ok(Loc::Col(si, c));
            }
        }
        Err(Error::Execution(format!("column {a} not available")))
    }

    fn value(&self, row: usize, loc: Loc) -> Option<Value> {
        let r = self.row(row);
        match loc {
            Loc::Tid(s) => Some(Value::Int(self.sources[s].table.tids[r[s] as usize] as i64)),
            Loc::Col(s, c) => {
                let src = &self.sources[s];
                let i = r[s] as usize;
                if let Some(d) = src.decrypted.get(&c) {
                    return d[i].clone();
                }
                match &src.table.columns[c].1 {
                    ColumnData::Plain(v) => Some(v[i].clone()),
                    ColumnData::Decrypted(v) => v[i].clone(),
                    ColumnData::Encrypted(_) => None,
                }
            }
        }
    }

    fn etuple(&self, row: usize, loc: Loc) -> Option<&ETuple> {
        let r = self.row(row);
        match loc {
            Loc::Col(s, c) => match &self.sources[s].table.columns[c].1 {
                ColumnData::Encrypted(v) => Some(&v[r[s] as usize]),
                _ => None,
            },
            Loc::Tid(_) => None,
        }
    }

    /// Accessor for predicate and expression evaluation on one row.
    fn getter<'a>(&'a self, row: usize) -> impl Fn(&AttrRef) -> Option<Value> + 'a {
        move |a| self.locate(a).ok().and_then(|l| self.value(row, l))
    }
}

fn scan(store: &Store, relation: &str, columns: &[String]) -> Result<Inter> {
    let table = store.get(relation)?.clone();
    let mut cols = Vec::with_capacity(columns.len());
    for c in columns {
        cols.push(table.column_index(c).ok_or_else(|| {
            Error::Execution(format!("fragment {relation} has no column {c}"))
        })?);
    }
    let rows = (0..table.len() as u32).collect();
    Ok(Inter {
        sources: vec![Source {
            table,
            cols,
            decrypted: BTreeMap::new(),
        }],
        rows,
    })
}

fn keep_rows(input: Inter, mut keep: impl FnMut(&Inter, usize) -> Result<bool>) -> Result<Inter> {
    let mut rows = Vec::new();
    for i in 0..input.len() {
        if keep(&input, i)? {
            rows.extend_from_slice(input.row(i));
        }
    }
    Ok(Inter {
        sources: input.sources,
        rows,
    })
}

fn filter(input: Inter, predicates: &[Predicate]) -> Result<Inter> {
    keep_rows(input, |inter, i| {
        for p in predicates {
            if !p.eval(inter.getter(i))? {
                return Ok(false);
            }
        }
        Ok(true)
    })
}

fn mapped_select(input: Inter, column: &AttrRef, ids: &std::collections::BTreeSet<PartitionId>) -> Result<Inter> {
    let loc = input.locate(column)?;
    keep_rows(input, |inter, i| {
        let e = inter
            .etuple(i, loc)
            .ok_or_else(|| Error::Execution(format!("{column} is not an encrypted column")))?;
        Ok(ids.contains(&e.partition_id))
    })
}

enum KeySpec {
    Plain(Loc, Loc),
    Mapped(Loc, Loc, HashMap<PartitionId, Vec<PartitionId>>),
}

fn plain_key(inter: &Inter, row: usize, loc: Loc) -> Result<Value> {
    inter
        .value(row, loc)
        .ok_or_else(|| Error::Execution("join key is encrypted or missing".into()))
}

fn id_key(inter: &Inter, row: usize, loc: Loc) -> Result<PartitionId> {
    inter
        .etuple(row, loc)
        .map(|e| e.partition_id)
        .ok_or_else(|| Error::Execution("mapped join over a non-encrypted column".into()))
}

fn spec_holds(spec: &KeySpec, l: &Inter, li: usize, r: &Inter, ri: usize) -> Result<bool> {
    Ok(match spec {
        KeySpec::Plain(a, b) => plain_key(l, li, *a)? == plain_key(r, ri, *b)?,
        KeySpec::Mapped(a, b, pairs) => {
            let rid = id_key(r, ri, *b)?;
            pairs
                .get(&id_key(l, li, *a)?)
                .is_some_and(|v| v.contains(&rid))
        }
    })
}

/// Hash join on the first key, remaining keys checked per candidate pair.
fn hash_join(l: Inter, r: Inter, specs: &[KeySpec], max_rows: usize) -> Result<Inter> {
    let mut sources = l.sources.clone();
    sources.extend(r.sources.iter().cloned());
    let mut rows: Vec<u32> = Vec::new();
    let ls = l.stride();
    let emit = |li: usize, ri: usize, rows: &mut Vec<u32>| -> Result<()> {
        for s in &specs[1.min(specs.len())..] {
            if !spec_holds(s, &l, li, &r, ri)? {
                return Ok(());
            }
        }
        if rows.len() / (ls + r.stride()) >= max_rows {
            return Err(Error::Execution(format!(
                "intermediate result exceeds {max_rows} rows"
            )));
        }
        rows.extend_from_slice(l.row(li));
        rows.extend_from_slice(r.row(ri));
        Ok(())
    };
    match specs.first() {
        None => {
            for li in 0..l.len() {
                for ri in 0..r.len() {
                    emit(li, ri, &mut rows)?;
                }
            }
        }
        Some(KeySpec::Plain(a, b)) => {
            let mut table: HashMap<Value, Vec<usize>> = HashMap::new();
            for ri in 0..r.len() {
                table.entry(plain_key(&r, ri, *b)?).or_default().push(ri);
            }
            for li in 0..l.len() {
                if let Some(matches) = table.get(&plain_key(&l, li, *a)?) {
                    for &ri in matches {
                        emit(li, ri, &mut rows)?;
                    }
                }
            }
        }
        Some(KeySpec::Mapped(a, b, pairs)) => {
            let mut table: HashMap<PartitionId, Vec<usize>> = HashMap::new();
            for ri in 0..r.len() {
                table.entry(id_key(&r, ri, *b)?).or_default().push(ri);
            }
            for li in 0..l.len() {
                let Some(partners) = pairs.get(&id_key(&l, li, *a)?) else {
                    continue;
                };
                for p in partners {
                    if let Some(matches) = table.get(p) {
                        for &ri in matches {
                            emit(li, ri, &mut rows)?;
                        }
                    }
                }
            }
        }
    }
    Ok(Inter { sources, rows })
}

fn plain_specs(l: &Inter, r: &Inter, on: &[JoinKey]) -> Result<Vec<KeySpec>> {
    on.iter()
        .map(|k| Ok(KeySpec::Plain(l.locate(&k.left)?, r.locate(&k.right)?)))
        .collect()
}

fn project(input: &Inter, items: &[Projection]) -> Result<Inter> {
    let mut cols: Vec<Vec<Value>> = vec![Vec::with_capacity(input.len()); items.len()];
    for i in 0..input.len() {
        let get = input.getter(i);
        for (c, p) in cols.iter_mut().zip(items) {
            c.push(p.expr.eval(&get)?);
        }
    }
    let n = input.len();
    let columns: Vec<(String, ColumnData)> = items
        .iter()
        .map(|p| p.name.clone())
        .zip(cols.into_iter().map(ColumnData::Plain))
        .collect();
    let width = columns.len();
    let table = Table::new(
        RESULT_RELATION.into(),
        String::new(),
        (0..n as u64).collect(),
        columns,
    );
    Ok(Inter {
        sources: vec![Source {
            table: Arc::new(table),
            cols: (0..width).collect(),
            decrypted: BTreeMap::new(),
        }],
        rows: (0..n as u32).collect(),
    })
}

struct SubRun {
    processed: f64,
    max_rows: usize,
}

impl SubRun {
    fn run(&mut self, plan: &SubPlan, store: &Store) -> Result<Inter> {
        let out = match plan {
            SubPlan::Scan {
                relation, columns, ..
            } => {
                let s = scan(store, relation, columns)?;
                self.processed += s.bytes();
                return Ok(s);
            }
            SubPlan::Select { input, condition } => {
                let i = self.run(input, store)?;
                match condition {
                    Condition::Plain(p) => filter(i, std::slice::from_ref(p))?,
                    Condition::Mapped(m) => mapped_select(i, &m.column, &m.identifier_set)?,
                }
            }
            SubPlan::Join { left, right, on } => {
                let l = self.run(left, store)?;
                let r = self.run(right, store)?;
                let specs = on
                    .iter()
                    .map(|c| match c {
                        JoinCondition::Plain(k) => {
                            Ok(KeySpec::Plain(l.locate(&k.left)?, r.locate(&k.right)?))
                        }
                        JoinCondition::Mapped(m) => {
                            let mut pairs: HashMap<PartitionId, Vec<PartitionId>> = HashMap::new();
                            for (a, b) in &m.pairs {
                                pairs.entry(*a).or_default().push(*b);
                            }
                            Ok(KeySpec::Mapped(l.locate(&m.left)?, r.locate(&m.right)?, pairs))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                // Plain keys hash better than identifier pairs.
                let mut specs = specs;
                specs.sort_by_key(|s| matches!(s, KeySpec::Mapped(..)));
                hash_join(l, r, &specs, self.max_rows)?
            }
            SubPlan::Project { input, items } => {
                let i = self.run(input, store)?;
                project(&i, items)?
            }
        };
        self.processed += out.bytes();
        Ok(out)
    }
}

fn run_stage(plan: &SubPlan, store: &Store, rate: f64, max_rows: usize) -> Result<(Inter, StageTrace)> {
    let start = Instant::now();
    let mut run = SubRun {
        processed: 0.0,
        max_rows,
    };
    let out = run.run(plan, store)?;
    let trace = StageTrace {
        rows: out.len() as u64,
        bytes: out.bytes(),
        processed_bytes: run.processed,
        simulated_secs: rate * run.processed,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((out, trace))
}

type StageResults = Result<Vec<(Inter, StageTrace)>>;

fn run_cloud(plans: &[SubPlan], store: &Store, rate: f64, max_rows: usize) -> StageResults {
    plans
        .iter()
        .map(|p| run_stage(p, store, rate, max_rows))
        .collect()
}

struct Post<'a> {
    public: Vec<Option<Inter>>,
    private: Vec<Option<Inter>>,
    cipher: &'a Cipher,
    decrypts: u64,
    decrypt_secs: f64,
}

impl Post<'_> {
    fn take(slot: &mut [Option<Inter>], i: usize, what: &str) -> Result<Inter> {
        slot.get_mut(i)
            .and_then(Option::take)
            .ok_or_else(|| Error::Execution(format!("{what}[{i}] missing or used twice")))
    }

    fn eval(&mut self, node: &PostNode) -> Result<Inter> {
        match node {
            PostNode::PublicInput(i) => Self::take(&mut self.public, *i, "public"),
            PostNode::PrivateInput(i) => Self::take(&mut self.private, *i, "private"),
            PostNode::Decrypt(input) => {
                let inter = self.eval(input)?;
                self.decrypt(inter)
            }
            PostNode::Filter { input, predicates } => filter(self.eval(input)?, predicates),
            PostNode::Join { left, right, on } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                let specs = plain_specs(&l, &r, on)?;
                hash_join(l, r, &specs, MAX_INTERMEDIATE_ROWS)
            }
            PostNode::Project { input, items } => project(&self.eval(input)?, items),
        }
    }

    /// Decrypts every encrypted visible cell the intermediate references,
    /// each base cell once.
    fn decrypt(&mut self, mut inter: Inter) -> Result<Inter> {
        let start = Instant::now();
        let stride = inter.stride();
        for si in 0..stride {
            let table = inter.sources[si].table.clone();
            let enc_cols: Vec<usize> = inter.sources[si]
                .cols
                .iter()
                .copied()
                .filter(|&c| matches!(table.columns[c].1, ColumnData::Encrypted(_)))
                .collect();
            for c in enc_cols {
                let ColumnData::Encrypted(cells) = &table.columns[c].1 else {
                    unreachable!()
                };
                let mut out: Vec<Option<Value>> = vec![None; cells.len()];
                for row in inter.rows.chunks(stride) {
                    let i = row[si] as usize;
                    if out[i].is_none() {
                        out[i] = Some(self.cipher.decrypt(&cells[i])?);
                        self.decrypts += 1;
                    }
                }
                inter.sources[si].decrypted.insert(c, Arc::new(out));
            }
        }
        self.decrypt_secs += start.elapsed().as_secs_f64();
        Ok(inter)
    }
}

fn to_result(inter: &Inter) -> ResultSet {
    let mut columns = Vec::new();
    let mut locs = Vec::new();
    for (si, s) in inter.sources.iter().enumerate() {
        for &c in &s.cols {
            let name = &s.table.columns[c].0;
            columns.push(if s.table.relation == RESULT_RELATION {
                name.clone()
            } else {
                format!("{}.{name}", s.table.relation)
            });
            locs.push(Loc::Col(si, c));
        }
    }
    let rows = (0..inter.len())
        .map(|i| {
            locs.iter()
                .map(|&l| inter.value(i, l).unwrap_or(Value::Text("<encrypted>".into())))
                .collect()
        })
        .collect();
    ResultSet { columns, rows }
}

/// Runs the public and private sub-plans (concurrently unless disabled),
/// then the post-processing tree.
pub fn execute(
    plan: &HybridPlan,
    stores: &Stores,
    key: &SecretKey,
    opts: &ExecOptions,
) -> Result<(ResultSet, ExecutionTrace)> {
    if plan.placement != stores.placement {
        return Err(Error::PlacementMismatch {
            plan: plan.placement.clone(),
            stores: stores.placement.clone(),
        });
    }
    let start = Instant::now();
    let p = opts.profile;
    let (public, private) = if opts.parallel {
        std::thread::scope(|s| {
            let pu = s.spawn(|| run_cloud(&plan.public, &stores.public, p.public, opts.max_rows));
            let pr = run_cloud(&plan.private, &stores.private, p.private, opts.max_rows);
            (pu.join().expect("public stage panicked"), pr)
        })
    } else {
        (
            run_cloud(&plan.public, &stores.public, p.public, opts.max_rows),
            run_cloud(&plan.private, &stores.private, p.private, opts.max_rows),
        )
    };
    let (public, private) = (public?, private?);

    let mut trace = ExecutionTrace::default();
    let mut pu_inters = Vec::new();
    for (i, t) in public {
        trace.public.push(t);
        pu_inters.push(Some(i));
    }
    let mut pr_inters = Vec::new();
    for (i, t) in private {
        trace.private.push(t);
        pr_inters.push(Some(i));
    }
    trace.transfer_bytes = trace.public.iter().map(|s| s.bytes).sum();
    trace.transfer_secs = p.link * trace.transfer_bytes;
    trace.combine_input_bytes =
        trace.transfer_bytes + trace.private.iter().map(|s| s.bytes).sum::<f64>();
    trace.combine_secs = p.combine * trace.combine_input_bytes;

    let cipher = Cipher::new(key);
    let mut post = Post {
        public: pu_inters,
        private: pr_inters,
        cipher: &cipher,
        decrypts: 0,
        decrypt_secs: 0.0,
    };
    let out = post.eval(&plan.post)?;
    trace.decrypt_count = post.decrypts;
    trace.decrypt_wall_secs = post.decrypt_secs;
    let result = to_result(&out);
    trace.result_rows = result.rows.len() as u64;
    trace.total_secs =
        trace.public_secs().max(trace.private_secs()) + trace.transfer_secs + trace.combine_secs;
    trace.wall_secs = start.elapsed().as_secs_f64();
    Ok((result, trace))
}

/// Projection names of a plan's final stage, if it has one.
pub fn output_columns(plan: &HybridPlan) -> Option<Vec<String>> {
    fn names(items: &[Projection]) -> Vec<String> {
        items.iter().map(|p| p.name.clone()).collect()
    }
    match &plan.post {
        PostNode::Project { items, .. } => Some(names(items)),
        PostNode::PrivateInput(0) | PostNode::PublicInput(0) => {
            let stage = match plan.post {
                PostNode::PrivateInput(_) => plan.private.first(),
                _ => plan.public.first(),
            };
            match stage {
                Some(SubPlan::Project { items, .. }) => Some(names(items)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Which cloud a stage belongs to, for reporting.
pub fn stage_cloud(plan: &SubPlan) -> Cloud {
    match plan {
        SubPlan::Scan { cloud, .. } => *cloud,
        SubPlan::Select { input, .. } | SubPlan::Project { input, .. } => stage_cloud(input),
        SubPlan::Join { left, .. } => stage_cloud(left),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn private_ratio_scales_only_private_rate() {
        let base = SimProfile::default();
        let p = SimProfile::with_private_ratio(7.5);
        assert_eq!(p.private, base.public * 7.5);
        assert_eq!((p.public, p.link, p.combine), (base.public, base.link, base.combine));
    }

    #[test]
    fn result_rows_sort_by_value() {
        let rs = ResultSet {
            columns: vec!["x".into()],
            rows: vec![vec![Value::Int(3)], vec![Value::Int(-1)], vec![Value::Int(2)]],
        };
        let sorted: Vec<_> = rs.sorted().rows.into_iter().map(|r| r[0].clone()).collect();
        assert_eq!(sorted, [Value::Int(-1), Value::Int(2), Value::Int(3)]);
    }
}
