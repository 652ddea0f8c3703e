use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{AttrRef, Catalog, Cloud};
use crate::error::{Error, Result};

use super::ast::{JoinKey, Predicate, Projection, Query};

/// Relational operator tree. A `Scan` with `part` set reads only the
/// fragment of the relation stored on that cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogicalPlan {
    Scan {
        relation: String,
        part: Option<Cloud>,
    },
    Select {
        input: Box<LogicalPlan>,
        predicate: Predicate,
    },
    Join {
        left: Box<LogicalPlan>,
        right: Box<LogicalPlan>,
        on: Vec<JoinKey>,
    },
    Project {
        input: Box<LogicalPlan>,
        items: Vec<Projection>,
    },
}

impl LogicalPlan {
    /// Left-deep join tree in FROM order (each relation attached as soon as
    /// it connects), selections above the joins, projection on top.
    pub fn from_query(query: &Query) -> Result<LogicalPlan> {
        let (joins, selections): (Vec<&Predicate>, Vec<&Predicate>) = query
            .predicates
            .iter()
            .partition(|p| matches!(p, Predicate::EquiJoin(_)));
        let keys: Vec<JoinKey> = joins
            .into_iter()
            .map(|p| match p {
                Predicate::EquiJoin(k) => k.clone(),
                _ => unreachable!(),
            })
            .collect();
        let first = query
            .sources
            .first()
            .ok_or_else(|| Error::Validation("query has no sources".into()))?;
        let mut tree = LogicalPlan::scan(first, None);
        let mut joined: BTreeSet<&str> = [first.as_str()].into();
        let mut remaining: Vec<&String> = query.sources[1..].iter().collect();
        while !remaining.is_empty() {
            let next = remaining.iter().position(|r| {
                keys.iter().any(|k| connects(k, &joined, r))
            });
            let Some(i) = next else {
                return Err(Error::Unsupported(format!(
                    "cross product: {} is not joined to {}",
                    remaining[0],
                    joined.iter().copied().collect::<Vec<_>>().join(", ")
                )));
            };
            let rel = remaining.remove(i);
            let on = keys
                .iter()
                .filter(|k| connects(k, &joined, rel))
                .map(|k| orient(k, &joined))
                .collect();
            tree = LogicalPlan::Join {
                left: Box::new(tree),
                right: Box::new(LogicalPlan::scan(rel, None)),
                on,
            };
            joined.insert(rel);
        }
        for p in selections {
            tree = LogicalPlan::Select {
                input: Box::new(tree),
                predicate: p.clone(),
            };
        }
        Ok(LogicalPlan::Project {
            input: Box::new(tree),
            items: query.projections.clone(),
        })
    }

    pub fn scan(relation: &str, part: Option<Cloud>) -> LogicalPlan {
        LogicalPlan::Scan {
            relation: relation.to_string(),
            part,
        }
    }

    /// Scan leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<(&str, Option<Cloud>)> {
        let mut out = Vec::new();
        self.walk_leaves(&mut out);
        out
    }

    fn walk_leaves<'a>(&'a self, out: &mut Vec<(&'a str, Option<Cloud>)>) {
        match self {
            LogicalPlan::Scan { relation, part } => out.push((relation, *part)),
            LogicalPlan::Select { input, .. } | LogicalPlan::Project { input, .. } => {
                input.walk_leaves(out)
            }
            LogicalPlan::Join { left, right, .. } => {
                left.walk_leaves(out);
                right.walk_leaves(out);
            }
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            LogicalPlan::Scan { relation, part } => match part {
                Some(c) => writeln!(f, "{pad}scan {relation}@{c}"),
                None => writeln!(f, "{pad}scan {relation}"),
            },
            LogicalPlan::Select { input, predicate } => {
                writeln!(f, "{pad}select {predicate}")?;
                input.fmt_indented(f, depth + 1)
            }
            LogicalPlan::Join { left, right, on } => {
                writeln!(f, "{pad}join {}", join_keys(on))?;
                left.fmt_indented(f, depth + 1)?;
                right.fmt_indented(f, depth + 1)
            }
            LogicalPlan::Project { input, items } => {
                let names: Vec<&str> = items.iter().map(|p| p.name.as_str()).collect();
                writeln!(f, "{pad}project {}", names.join(", "))?;
                input.fmt_indented(f, depth + 1)
            }
        }
    }
}

pub(crate) fn join_keys(on: &[JoinKey]) -> String {
    on.iter().map(JoinKey::to_string).collect::<Vec<_>>().join(" AND ")
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_indented(f, 0)
    }
}

fn connects(k: &JoinKey, joined: &BTreeSet<&str>, rel: &str) -> bool {
    (joined.contains(k.left.relation.as_str()) && k.right.relation == rel)
        || (joined.contains(k.right.relation.as_str()) && k.left.relation == rel)
}

fn orient(k: &JoinKey, joined: &BTreeSet<&str>) -> JoinKey {
    if joined.contains(k.left.relation.as_str()) {
        k.clone()
    } else {
        k.swapped()
    }
}

/// Tuple-id equi-join reassembling the two fragments of `relation`.
pub fn tid_key(catalog: &Catalog, relation: &str) -> JoinKey {
    let tid = catalog.tuple_id(relation).unwrap_or(crate::catalog::DEFAULT_TUPLE_ID);
    JoinKey {
        left: AttrRef::new(relation, tid),
        right: AttrRef::new(relation, tid),
    }
}

fn is_tid_key(k: &JoinKey) -> bool {
    k.left == k.right
}

/// Where a scan leaf lives: explicit for fragment scans, otherwise the single
/// cloud holding every attribute the plan needs from the relation.
pub(crate) fn leaf_cloud(
    catalog: &Catalog,
    relation: &str,
    part: Option<Cloud>,
    needed: &BTreeSet<AttrRef>,
) -> Result<Cloud> {
    if let Some(c) = part {
        return Ok(c);
    }
    let mut clouds = BTreeSet::new();
    for a in needed.iter().filter(|a| a.relation == relation) {
        if let Some(meta) = catalog.attribute(a) {
            clouds.insert(meta.placement);
        }
    }
    match clouds.len() {
        0 => Ok(default_cloud(catalog, relation)),
        1 => Ok(*clouds.iter().next().expect("one")),
        _ => Err(Error::Planning(format!(
            "relation {relation} spans both clouds; rearrange the plan first"
        ))),
    }
}

/// Cloud for a relation none of whose attributes the query needs: wherever
/// any attribute (and so a copy of the tuple ids) lives, preferring public.
fn default_cloud(catalog: &Catalog, relation: &str) -> Cloud {
    if catalog
        .attributes_of(relation)
        .any(|a| a.placement == Cloud::Public)
    {
        Cloud::Public
    } else {
        Cloud::Private
    }
}

/// Every attribute (tuple ids excluded) referenced anywhere in the plan.
pub(crate) fn needed_attrs(plan: &LogicalPlan, catalog: &Catalog) -> BTreeSet<AttrRef> {
    let mut out = BTreeSet::new();
    collect_needed(plan, &mut out);
    out.retain(|a| catalog.attribute(a).is_some());
    out
}

fn collect_needed(plan: &LogicalPlan, out: &mut BTreeSet<AttrRef>) {
    match plan {
        LogicalPlan::Scan { .. } => {}
        LogicalPlan::Select { input, predicate } => {
            out.extend(predicate.attrs().into_iter().cloned());
            collect_needed(input, out);
        }
        LogicalPlan::Join { left, right, on } => {
            for k in on {
                out.insert(k.left.clone());
                out.insert(k.right.clone());
            }
            collect_needed(left, out);
            collect_needed(right, out);
        }
        LogicalPlan::Project { input, items } => {
            for p in items {
                let mut cols = Vec::new();
                p.expr.columns(&mut cols);
                out.extend(cols.into_iter().cloned());
            }
            collect_needed(input, out);
        }
    }
}

struct Flat {
    relations: Vec<String>,
    selections: Vec<Predicate>,
    joins: Vec<JoinKey>,
    projection: Option<Vec<Projection>>,
}

fn flatten(plan: &LogicalPlan, flat: &mut Flat) -> Result<()> {
    match plan {
        LogicalPlan::Scan { relation, .. } => {
            if !flat.relations.contains(relation) {
                flat.relations.push(relation.clone());
            }
        }
        LogicalPlan::Select { input, predicate } => {
            flat.selections.push(predicate.clone());
            flatten(input, flat)?;
        }
        LogicalPlan::Join { left, right, on } => {
            flat.joins.extend(on.iter().filter(|k| !is_tid_key(k)).cloned());
            flatten(left, flat)?;
            flatten(right, flat)?;
        }
        LogicalPlan::Project { input, items } => {
            if flat.projection.is_some() {
                return Err(Error::Planning("nested projection".into()));
            }
            flat.projection = Some(items.clone());
            flatten(input, flat)?;
        }
    }
    Ok(())
}

struct Leaf {
    relation: String,
    part: Option<Cloud>,
    cloud: Cloud,
}

/// Reorders the plan for cloud locality.
///
/// A relation whose needed attributes live on both clouds becomes two
/// fragment scans joined on the tuple id. Selections sit directly on the
/// leaf holding their attribute, same-cloud leaves connected by joins form
/// maximal subtrees (public ones first), and the subtrees are then joined
/// across clouds. The projection stays on top.
pub fn rearrange(plan: &LogicalPlan, catalog: &Catalog) -> Result<LogicalPlan> {
    let mut flat = Flat {
        relations: Vec::new(),
        selections: Vec::new(),
        joins: Vec::new(),
        projection: None,
    };
    flatten(plan, &mut flat)?;
    // Selections were collected top-down; restore query order.
    flat.selections.reverse();
    let needed = needed_attrs(plan, catalog);

    let mut leaves: Vec<Leaf> = Vec::new();
    let mut edges: Vec<(usize, usize, JoinKey)> = Vec::new();
    for rel in &flat.relations {
        let clouds: BTreeSet<Cloud> = needed
            .iter()
            .filter(|a| a.relation == *rel)
            .filter_map(|a| catalog.attribute(a).map(|m| m.placement))
            .collect();
        if clouds.len() == 2 {
            let pu = leaves.len();
            leaves.push(Leaf {
                relation: rel.clone(),
                part: Some(Cloud::Public),
                cloud: Cloud::Public,
            });
            leaves.push(Leaf {
                relation: rel.clone(),
                part: Some(Cloud::Private),
                cloud: Cloud::Private,
            });
            edges.push((pu, pu + 1, tid_key(catalog, rel)));
        } else {
            let cloud = leaf_cloud(catalog, rel, None, &needed)?;
            leaves.push(Leaf {
                relation: rel.clone(),
                part: None,
                cloud,
            });
        }
    }
    let leaf_of = |a: &AttrRef| -> Result<usize> {
        let placement = catalog.attribute_or_err(a)?.placement;
        leaves
            .iter()
            .position(|l| l.relation == a.relation && (l.part.is_none() || l.cloud == placement))
            .ok_or_else(|| Error::Planning(format!("no scan provides {a}")))
    };
    for k in &flat.joins {
        let (l, r) = (leaf_of(&k.left)?, leaf_of(&k.right)?);
        edges.push((l, r, k.clone()));
    }

    let mut subtrees: Vec<LogicalPlan> = leaves
        .iter()
        .map(|l| LogicalPlan::scan(&l.relation, l.part))
        .collect();
    for p in &flat.selections {
        let i = leaf_of(p.attrs()[0])?;
        let input = std::mem::replace(&mut subtrees[i], LogicalPlan::scan("", None));
        subtrees[i] = LogicalPlan::Select {
            input: Box::new(input),
            predicate: p.clone(),
        };
    }

    // Group same-cloud leaves connected by joins.
    let mut group: Vec<usize> = (0..leaves.len()).collect();
    fn find(g: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while g[r] != r {
            r = g[r];
        }
        g[x] = r;
        r
    }
    for (l, r, _) in &edges {
        if leaves[*l].cloud == leaves[*r].cloud {
            let (a, b) = (find(&mut group, *l), find(&mut group, *r));
            group[a.max(b)] = a.min(b);
        }
    }
    let mut clusters: BTreeMap<(u8, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..leaves.len() {
        let root = find(&mut group, i);
        let rank = if leaves[root].cloud == Cloud::Public { 0 } else { 1 };
        clusters.entry((rank, root)).or_default().push(i);
    }

    let mut subtrees: Vec<Option<LogicalPlan>> = subtrees.into_iter().map(Some).collect();
    let mut cluster_trees: Vec<(BTreeSet<usize>, LogicalPlan)> = Vec::new();
    for members in clusters.values() {
        let same_cloud: Vec<&(usize, usize, JoinKey)> = edges
            .iter()
            .filter(|(l, r, _)| members.contains(l) && members.contains(r))
            .collect();
        let parts: Vec<(BTreeSet<usize>, LogicalPlan)> = members
            .iter()
            .map(|&i| ([i].into(), subtrees[i].take().expect("leaf used once")))
            .collect();
        cluster_trees.push(compose(parts, &same_cloud)?);
    }
    let cross: Vec<&(usize, usize, JoinKey)> = edges
        .iter()
        .filter(|(l, r, _)| leaves[*l].cloud != leaves[*r].cloud)
        .collect();
    let (_, tree) = compose(cluster_trees, &cross)?;
    Ok(match flat.projection {
        Some(items) => LogicalPlan::Project {
            input: Box::new(tree),
            items,
        },
        None => tree,
    })
}

/// Joins the parts greedily, always attaching the first part connected to
/// what is built so far. Every edge between two parts becomes a join key.
fn compose(
    mut parts: Vec<(BTreeSet<usize>, LogicalPlan)>,
    edges: &[&(usize, usize, JoinKey)],
) -> Result<(BTreeSet<usize>, LogicalPlan)> {
    if parts.is_empty() {
        return Err(Error::Planning("empty join group".into()));
    }
    let (mut built, mut tree) = parts.remove(0);
    while !parts.is_empty() {
        let linked = |set: &BTreeSet<usize>, built: &BTreeSet<usize>| {
            edges.iter().any(|(l, r, _)| {
                (built.contains(l) && set.contains(r)) || (built.contains(r) && set.contains(l))
            })
        };
        let i = parts
            .iter()
            .position(|(set, _)| linked(set, &built))
            .ok_or_else(|| Error::Planning("disconnected join graph".into()))?;
        let (set, right) = parts.remove(i);
        let on: Vec<JoinKey> = edges
            .iter()
            .filter_map(|(l, r, k)| {
                if built.contains(l) && set.contains(r) {
                    Some(k.clone())
                } else if built.contains(r) && set.contains(l) {
                    Some(k.swapped())
                } else {
                    None
                }
            })
            .collect();
        tree = LogicalPlan::Join {
            left: Box::new(tree),
            right: Box::new(right),
            on,
        };
        built.extend(set);
    }
    Ok((built, tree))
}
