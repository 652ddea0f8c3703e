//! Reference evaluator over plaintext tables, independent of the planner.

use std::collections::{BTreeMap, HashMap};

use crate::catalog::{AttrRef, Catalog};
use crate::error::{Error, Result};
use crate::queryir::{Predicate, Query};
use crate::value::Value;

use super::table::PlainTable;

struct Bound<'a> {
    tables: Vec<&'a PlainTable>,
    tuple_ids: Vec<&'a str>,
}

impl Bound<'_> {
    fn get(&self, combo: &[usize], a: &AttrRef) -> Option<Value> {
        let t = self.tables.iter().position(|t| t.relation == a.relation)?;
        let row = *combo.get(t)?;
        if row == usize::MAX {
            return None;
        }
        if self.tuple_ids[t] == a.attribute {
            return Some(Value::Int(self.tables[t].tids[row] as i64));
        }
        self.tables[t].column(&a.attribute).map(|c| c[row].clone())
    }
}

fn covered(p: &Predicate, joined: &[bool], index: &BTreeMap<&str, usize>) -> bool {
    p.attrs()
        .iter()
        .all(|a| index.get(a.relation.as_str()).is_some_and(|&i| joined[i]))
}

/// Evaluates `query` directly on unpartitioned data and returns the
/// projected rows sorted.
pub fn ground_truth(
    query: &Query,
    catalog: &Catalog,
    tables: &BTreeMap<String, PlainTable>,
) -> Result<Vec<Vec<Value>>> {
    let mut bound = Bound {
        tables: Vec::new(),
        tuple_ids: Vec::new(),
    };
    for s in &query.sources {
        bound.tables.push(
            tables
                .get(s)
                .ok_or_else(|| Error::Execution(format!("no data for relation {s}")))?,
        );
        bound
            .tuple_ids
            .push(catalog.tuple_id(s).ok_or_else(|| Error::Execution(format!("unknown relation {s}")))?);
    }
    let n = query.sources.len();
    let index: BTreeMap<&str, usize> =
        query.sources.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    // Per-relation candidate rows after single-relation predicates.
    let mut local: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut combo = vec![usize::MAX; n];
        let preds: Vec<&Predicate> = query
            .predicates
            .iter()
            .filter(|p| p.attrs().iter().all(|a| a.relation == query.sources[i]))
            .collect();
        let mut keep = Vec::new();
        for row in 0..bound.tables[i].len() {
            combo[i] = row;
            let mut ok = true;
            for p in &preds {
                if !p.eval(|a| bound.get(&combo, a))? {
                    ok = false;
                    break;
                }
            }
            if ok {
                keep.push(row);
            }
        }
        local.push(keep);
    }

    let mut joined = vec![false; n];
    let mut done = vec![false; query.predicates.len()];
    let mut combos: Vec<Vec<usize>> = local[0]
        .iter()
        .map(|&r| {
            let mut c = vec![usize::MAX; n];
            c[0] = r;
            c
        })
        .collect();
    joined[0] = true;
    for (k, p) in query.predicates.iter().enumerate() {
        done[k] = covered(p, &joined, &index);
    }

    while joined.iter().any(|j| !j) {
        // Prefer a relation linked by an equi-join to the joined set.
        let mut next = None;
        for p in &query.predicates {
            if let Predicate::EquiJoin(k) = p {
                let (l, r) = (index[k.left.relation.as_str()], index[k.right.relation.as_str()]);
                if joined[l] && !joined[r] {
                    next = Some((r, Some((k.left.clone(), k.right.clone()))));
                    break;
                }
                if joined[r] && !joined[l] {
                    next = Some((l, Some((k.right.clone(), k.left.clone()))));
                    break;
                }
            }
        }
        let (t, key) = next.unwrap_or_else(|| (joined.iter().position(|j| !j).unwrap(), None));
        let mut out = Vec::new();
        match key {
            Some((outer, inner)) => {
                let mut hash: HashMap<Value, Vec<usize>> = HashMap::new();
                let mut probe = vec![usize::MAX; n];
                for &row in &local[t] {
                    probe[t] = row;
                    if let Some(v) = bound.get(&probe, &inner) {
                        hash.entry(v).or_default().push(row);
                    }
                }
                for c in &combos {
                    if let Some(rows) = bound.get(c, &outer).and_then(|v| hash.get(&v)) {
                        for &row in rows {
                            let mut c2 = c.clone();
                            c2[t] = row;
                            out.push(c2);
                        }
                    }
                }
            }
            None => {
                for c in &combos {
                    for &row in &local[t] {
                        let mut c2 = c.clone();
                        c2[t] = row;
                        out.push(c2);
                    }
                }
            }
        }
        joined[t] = true;
        let now: Vec<&Predicate> = query
            .predicates
            .iter()
            .enumerate()
            .filter(|(k, p)| !done[*k] && covered(p, &joined, &index))
            .map(|(_, p)| p)
            .collect();
        for (k, p) in query.predicates.iter().enumerate() {
            done[k] = done[k] || covered(p, &joined, &index);
        }
        let mut kept = Vec::with_capacity(out.len());
        for c in out {
            let mut ok = true;
            for p in &now {
                if !p.eval(|a| bound.get(&c, a))? {
                    ok = false;
                    break;
                }
            }
            if ok {
                kept.push(c);
            }
        }
        combos = kept;
    }

    let mut rows = Vec::with_capacity(combos.len());
    for c in &combos {
        let get = |a: &AttrRef| bound.get(c, a);
        rows.push(
            query
                .projections
                .iter()
                .map(|p| p.expr.eval(&get))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    rows.sort();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queryir::parse_query;
    use crate::workload::{generate_data, GeneratorConfig};

    #[test]
    fn unconnected_relations_form_a_cross_product() {
        let d = generate_data(&GeneratorConfig {
            scale_factor: 0.0001,
            ..Default::default()
        })
        .unwrap();
        let q = parse_query("SELECT r_name, n_name FROM region, nation", &d.catalog).unwrap();
        assert_eq!(ground_truth(&q, &d.catalog, &d.tables).unwrap().len(), 5 * 25);
        let q = parse_query(
            "SELECT n_name FROM region, nation WHERE r_regionkey = n_regionkey AND r_name = 'ASIA'",
            &d.catalog,
        )
        .unwrap();
        assert_eq!(ground_truth(&q, &d.catalog, &d.tables).unwrap().len(), 5);
    }
}
