use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bucketize::{MappedCondition, MappedJoin, MappedPredicate, SchemeRegistry};
use crate::catalog::{AttrRef, Catalog, Cloud};
use crate::error::{Error, Result};

use super::ast::{JoinKey, Predicate, Projection, Query};
use super::plan::{join_keys, leaf_cloud, needed_attrs, rearrange, LogicalPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Plain(Predicate),
    /// Membership of an index column in an identifier set.
    Mapped(MappedCondition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JoinCondition {
    Plain(JoinKey),
    /// Identifier-pair membership over two index columns.
    Mapped(MappedJoin),
}

/// Operator tree evaluated entirely inside one cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubPlan {
    /// Reads the tuple id plus `columns` of the relation's fragment.
    Scan {
        relation: String,
        cloud: Cloud,
        columns: Vec<String>,
    },
    Select {
        input: Box<SubPlan>,
        condition: Condition,
    },
    Join {
        left: Box<SubPlan>,
        right: Box<SubPlan>,
        on: Vec<JoinCondition>,
    },
    Project {
        input: Box<SubPlan>,
        items: Vec<Projection>,
    },
}

impl SubPlan {
    /// Every literal predicate evaluated by this plan.
    pub fn plain_predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let SubPlan::Select {
                condition: Condition::Plain(pred),
                ..
            } = p
            {
                out.push(pred);
            }
        });
        out
    }

    pub fn scans(&self) -> Vec<(&str, Cloud, &[String])> {
        let mut out = Vec::new();
        self.walk(&mut |p| {
            if let SubPlan::Scan {
                relation,
                cloud,
                columns,
            } = p
            {
                out.push((relation.as_str(), *cloud, columns.as_slice()));
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a SubPlan)) {
        f(self);
        match self {
            SubPlan::Scan { .. } => {}
            SubPlan::Select { input, .. } | SubPlan::Project { input, .. } => input.walk(f),
            SubPlan::Join { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            SubPlan::Scan {
                relation,
                cloud,
                columns,
            } => writeln!(f, "{pad}scan {relation}@{cloud} [{}]", columns.join(", ")),
            SubPlan::Select { input, condition } => {
                match condition {
                    Condition::Plain(p) => writeln!(f, "{pad}select {p}")?,
                    Condition::Mapped(m) => writeln!(
                        f,
                        "{pad}select {}_id in {} ids",
                        m.column,
                        m.identifier_set.len()
                    )?,
                }
                input.fmt_indented(f, depth + 1)
            }
            SubPlan::Join { left, right, on } => {
                let keys: Vec<String> = on
                    .iter()
                    .map(|c| match c {
                        JoinCondition::Plain(k) => k.to_string(),
                        JoinCondition::Mapped(m) => format!(
                            "{}_id ~ {}_id [{} pairs]",
                            m.left,
                            m.right,
                            m.pairs.len()
                        ),
                    })
                    .collect();
                writeln!(f, "{pad}join {}", keys.join(" AND "))?;
                left.fmt_indented(f, depth + 1)?;
                right.fmt_indented(f, depth + 1)
            }
            SubPlan::Project { input, items } => {
                let names: Vec<&str> = items.iter().map(|p| p.name.as_str()).collect();
                writeln!(f, "{pad}project {}", names.join(", "))?;
                input.fmt_indented(f, depth + 1)
            }
        }
    }
}

/// Private-side stage combining sub-plan results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PostNode {
    PublicInput(usize),
    PrivateInput(usize),
    Decrypt(Box<PostNode>),
    Filter {
        input: Box<PostNode>,
        predicates: Vec<Predicate>,
    },
    Join {
        left: Box<PostNode>,
        right: Box<PostNode>,
        on: Vec<JoinKey>,
    },
    Project {
        input: Box<PostNode>,
        items: Vec<Projection>,
    },
}

impl PostNode {
    pub fn decrypt_stages(&self) -> usize {
        match self {
            PostNode::PublicInput(_) | PostNode::PrivateInput(_) => 0,
            PostNode::Decrypt(i) => 1 + i.decrypt_stages(),
            PostNode::Filter { input, .. } | PostNode::Project { input, .. } => {
                input.decrypt_stages()
            }
            PostNode::Join { left, right, .. } => left.decrypt_stages() + right.decrypt_stages(),
        }
    }

    pub fn filtered_predicates(&self) -> Vec<&Predicate> {
        match self {
            PostNode::PublicInput(_) | PostNode::PrivateInput(_) => Vec::new(),
            PostNode::Decrypt(i) => i.filtered_predicates(),
            PostNode::Filter { input, predicates } => {
                let mut v: Vec<&Predicate> = predicates.iter().collect();
                v.extend(input.filtered_predicates());
                v
            }
            PostNode::Project { input, .. } => input.filtered_predicates(),
            PostNode::Join { left, right, .. } => {
                let mut v = left.filtered_predicates();
                v.extend(right.filtered_predicates());
                v
            }
        }
    }

    fn fmt_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            PostNode::PublicInput(i) => writeln!(f, "{pad}public[{i}]"),
            PostNode::PrivateInput(i) => writeln!(f, "{pad}private[{i}]"),
            PostNode::Decrypt(input) => {
                writeln!(f, "{pad}decrypt")?;
                input.fmt_indented(f, depth + 1)
            }
            PostNode::Filter { input, predicates } => {
                let ps: Vec<String> = predicates.iter().map(Predicate::to_string).collect();
                writeln!(f, "{pad}filter {}", ps.join(" AND "))?;
                input.fmt_indented(f, depth + 1)
            }
            PostNode::Join { left, right, on } => {
                writeln!(f, "{pad}join {}", join_keys(on))?;
                left.fmt_indented(f, depth + 1)?;
                right.fmt_indented(f, depth + 1)
            }
            PostNode::Project { input, items } => {
                let names: Vec<&str> = items.iter().map(|p| p.name.as_str()).collect();
                writeln!(f, "{pad}project {}", names.join(", "))?;
                input.fmt_indented(f, depth + 1)
            }
        }
    }
}

/// A query split into per-cloud sub-plans and a post-processing tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPlan {
    pub public: Vec<SubPlan>,
    pub private: Vec<SubPlan>,
    pub post: PostNode,
    /// Fingerprint of the placement the plan was compiled under.
    pub placement: String,
}

impl HybridPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Single-line form, one plan per line in plan listings.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<HybridPlan> {
        Ok(serde_json::from_str(text)?)
    }

    /// The part shipped to the public cloud, serialized.
    pub fn public_json(&self) -> String {
        serde_json::to_string(&self.public).expect("plan serializes")
    }
}

impl fmt::Display for HybridPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.public.iter().enumerate() {
            writeln!(f, "public[{i}]:")?;
            p.fmt_indented(f, 1)?;
        }
        for (i, p) in self.private.iter().enumerate() {
            writeln!(f, "private[{i}]:")?;
            p.fmt_indented(f, 1)?;
        }
        writeln!(f, "post:")?;
        self.post.fmt_indented(f, 1)
    }
}

enum Lowered {
    Public {
        plan: SubPlan,
        /// Originals of mapped conditions, re-applied after decryption.
        lossy: Vec<Predicate>,
        encrypted: bool,
    },
    Private(SubPlan),
    Post(PostNode),
}

struct Splitter<'a> {
    catalog: &'a Catalog,
    schemes: &'a SchemeRegistry,
    needed: std::collections::BTreeSet<AttrRef>,
    public: Vec<SubPlan>,
    private: Vec<SubPlan>,
}

impl Splitter<'_> {
    fn encrypted(&self, a: &AttrRef) -> bool {
        self.catalog.attribute(a).is_some_and(|m| m.is_encrypted())
    }

    fn lower(&mut self, plan: &LogicalPlan) -> Result<Lowered> {
        match plan {
            LogicalPlan::Scan { relation, part } => {
                let cloud = leaf_cloud(self.catalog, relation, *part, &self.needed)?;
                let columns: Vec<String> = self
                    .catalog
                    .attributes_of(relation)
                    .filter(|m| m.placement == cloud && self.needed.contains(&m.attr_ref()))
                    .map(|m| m.name.clone())
                    .collect();
                let encrypted = columns
                    .iter()
                    .any(|c| self.encrypted(&AttrRef::new(relation, c)));
                let scan = SubPlan::Scan {
                    relation: relation.clone(),
                    cloud,
                    columns,
                };
                Ok(match cloud {
                    Cloud::Public => Lowered::Public {
                        plan: scan,
                        lossy: Vec::new(),
                        encrypted,
                    },
                    Cloud::Private => Lowered::Private(scan),
                })
            }
            LogicalPlan::Select { input, predicate } => {
                let lowered = self.lower(input)?;
                match lowered {
                    Lowered::Public {
                        plan,
                        mut lossy,
                        encrypted,
                    } => {
                        let attr = predicate.attrs()[0];
                        if !self.encrypted(attr) {
                            return Ok(Lowered::Public {
                                plan: select(plan, Condition::Plain(predicate.clone())),
                                lossy,
                                encrypted,
                            });
                        }
                        match self.map(predicate)? {
                            Some(MappedPredicate::Selection(m)) => {
                                lossy.push(predicate.clone());
                                Ok(Lowered::Public {
                                    plan: select(plan, Condition::Mapped(m)),
                                    lossy,
                                    encrypted,
                                })
                            }
                            _ => {
                                let done = self.finish(Lowered::Public {
                                    plan,
                                    lossy,
                                    encrypted,
                                });
                                Ok(Lowered::Post(filter(done, vec![predicate.clone()])))
                            }
                        }
                    }
                    Lowered::Private(plan) => Ok(Lowered::Private(select(
                        plan,
                        Condition::Plain(predicate.clone()),
                    ))),
                    Lowered::Post(node) => Ok(Lowered::Post(filter(node, vec![predicate.clone()]))),
                }
            }
            LogicalPlan::Join { left, right, on } => {
                let l = self.lower(left)?;
                let r = self.lower(right)?;
                match (l, r) {
                    (
                        Lowered::Public {
                            plan: lp,
                            lossy: mut ll,
                            encrypted: le,
                        },
                        Lowered::Public {
                            plan: rp,
                            lossy: rl,
                            encrypted: re,
                        },
                    ) => {
                        let mut conditions = Vec::new();
                        let mut mapped_keys = Vec::new();
                        let mut ok = true;
                        for k in on {
                            match (self.encrypted(&k.left), self.encrypted(&k.right)) {
                                (false, false) => conditions.push(JoinCondition::Plain(k.clone())),
                                (true, true) => {
                                    match self.map(&Predicate::EquiJoin(k.clone()))? {
                                        Some(MappedPredicate::Join(m)) => {
                                            conditions.push(JoinCondition::Mapped(m));
                                            mapped_keys.push(Predicate::EquiJoin(k.clone()));
                                        }
                                        _ => ok = false,
                                    }
                                }
                                _ => ok = false,
                            }
                        }
                        if ok {
                            ll.extend(rl);
                            ll.extend(mapped_keys);
                            Ok(Lowered::Public {
                                plan: SubPlan::Join {
                                    left: Box::new(lp),
                                    right: Box::new(rp),
                                    on: conditions,
                                },
                                lossy: ll,
                                encrypted: le || re,
                            })
                        } else {
                            let l = self.finish(Lowered::Public {
                                plan: lp,
                                lossy: ll,
                                encrypted: le,
                            });
                            let r = self.finish(Lowered::Public {
                                plan: rp,
                                lossy: rl,
                                encrypted: re,
                            });
                            Ok(Lowered::Post(post_join(l, r, on)))
                        }
                    }
                    (Lowered::Private(lp), Lowered::Private(rp)) => {
                        Ok(Lowered::Private(SubPlan::Join {
                            left: Box::new(lp),
                            right: Box::new(rp),
                            on: on.iter().cloned().map(JoinCondition::Plain).collect(),
                        }))
                    }
                    (l, r) => {
                        let l = self.finish(l);
                        let r = self.finish(r);
                        Ok(Lowered::Post(post_join(l, r, on)))
                    }
                }
            }
            LogicalPlan::Project { input, items } => match self.lower(input)? {
                Lowered::Private(plan) => Ok(Lowered::Private(SubPlan::Project {
                    input: Box::new(plan),
                    items: items.clone(),
                })),
                // Nothing left to decrypt or re-check: project in place.
                Lowered::Public {
                    plan,
                    lossy,
                    encrypted: false,
                } if lossy.is_empty() => Ok(Lowered::Public {
                    plan: SubPlan::Project {
                        input: Box::new(plan),
                        items: items.clone(),
                    },
                    lossy,
                    encrypted: false,
                }),
                other => {
                    let node = self.finish(other);
                    Ok(Lowered::Post(PostNode::Project {
                        input: Box::new(node),
                        items: items.clone(),
                    }))
                }
            },
        }
    }

    /// Maps a predicate over encrypted attributes. `None` when the registry
    /// cannot express it, in which case the operator moves to post.
    fn map(&self, predicate: &Predicate) -> Result<Option<MappedPredicate>> {
        for a in predicate.attrs() {
            if self.schemes.get(a).is_none() {
                return Err(Error::Planning(format!(
                    "no bucket scheme for encrypted attribute {a}"
                )));
            }
        }
        match self.schemes.map_condition(predicate) {
            Ok(m) => Ok(Some(m)),
            Err(Error::Unmappable(why)) => {
                log::debug!("hoisting into post-processing: {why}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn finish(&mut self, lowered: Lowered) -> PostNode {
        match lowered {
            Lowered::Public {
                plan,
                lossy,
                encrypted,
            } => {
                self.public.push(plan);
                let mut node = PostNode::PublicInput(self.public.len() - 1);
                if encrypted {
                    node = PostNode::Decrypt(Box::new(node));
                }
                if lossy.is_empty() {
                    node
                } else {
                    filter(node, lossy)
                }
            }
            Lowered::Private(plan) => {
                self.private.push(plan);
                PostNode::PrivateInput(self.private.len() - 1)
            }
            Lowered::Post(node) => node,
        }
    }
}

fn select(input: SubPlan, condition: Condition) -> SubPlan {
    SubPlan::Select {
        input: Box::new(input),
        condition,
    }
}

fn filter(input: PostNode, predicates: Vec<Predicate>) -> PostNode {
    PostNode::Filter {
        input: Box::new(input),
        predicates,
    }
}

fn post_join(left: PostNode, right: PostNode, on: &[JoinKey]) -> PostNode {
    PostNode::Join {
        left: Box::new(left),
        right: Box::new(right),
        on: on.to_vec(),
    }
}

/// Splits a rearranged plan. Subtrees over public fragments only go to the
/// public cloud with encrypted-attribute conditions mapped to identifier
/// sets; subtrees over private fragments only go to the private cloud; the
/// rest becomes the post-processing tree.
pub fn split(plan: &LogicalPlan, catalog: &Catalog, schemes: &SchemeRegistry) -> Result<HybridPlan> {
    let mut s = Splitter {
        catalog,
        schemes,
        needed: needed_attrs(plan, catalog),
        public: Vec::new(),
        private: Vec::new(),
    };
    let post = match s.lower(plan)? {
        Lowered::Private(p) => {
            s.private.push(p);
            PostNode::PrivateInput(0)
        }
        other => s.finish(other),
    };
    Ok(HybridPlan {
        public: s.public,
        private: s.private,
        post,
        placement: catalog.placement_fingerprint(),
    })
}

/// Builds, rearranges and splits the plan for a bound query.
pub fn plan_query(query: &Query, catalog: &Catalog, schemes: &SchemeRegistry) -> Result<HybridPlan> {
    let logical = LogicalPlan::from_query(query)?;
    let arranged = rearrange(&logical, catalog)?;
    split(&arranged, catalog, schemes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bucketize::PartitionConfig;
    use crate::queryir::parse_query;

    const TWO: &str = r#"
capacity = 100

[[relation]]
name = "r"
attributes = [
    { name = "a", type = "integer", size = 1 },
    { name = "b", type = "integer", size = 1 },
]

[[relation]]
name = "s"
attributes = [
    { name = "c", type = "integer", size = 1 },
    { name = "d", type = "text", size = 1 },
]

[stats.r]
rows = 100
[stats.r.columns.a]
distinct = 100
min = "0"
max = "99"
width = 8
[stats.r.columns.b]
distinct = 10
min = "0"
max = "9"
width = 8

[stats.s]
rows = 10
[stats.s.columns.c]
distinct = 10
min = "0"
max = "9"
width = 8
[stats.s.columns.d]
distinct = 10
min = "alpha"
max = "zulu"
width = 6
"#;

    fn planned(edit: impl Fn(&str) -> String, sql: &str) -> HybridPlan {
        let catalog = Catalog::from_toml_str(&edit(TWO)).unwrap();
        let schemes = SchemeRegistry::build(&catalog, PartitionConfig::default(), b"k").unwrap();
        plan_query(&parse_query(sql, &catalog).unwrap(), &catalog, &schemes).unwrap()
    }

    fn mark(attr: &str, extra: &str) -> impl Fn(&str) -> String {
        let from = format!("{{ name = \"{attr}\", type = \"integer\", size = 1 }}");
        let to = format!("{{ name = \"{attr}\", type = \"integer\", size = 1, {extra} }}");
        move |t: &str| t.replace(&from, &to)
    }

    #[test]
    fn plain_public_query_runs_entirely_public() {
        let p = planned(str::to_string, "SELECT a, d FROM r, s WHERE b = c AND a < 5");
        assert_eq!(p.public.len(), 1);
        assert!(p.private.is_empty());
        assert_eq!(p.post, PostNode::PublicInput(0));
        assert!(matches!(p.public[0], SubPlan::Project { .. }));
    }

    #[test]
    fn sensitive_selection_is_mapped_and_rechecked() {
        let p = planned(mark("a", "sensitive = true"), "SELECT a FROM r WHERE a < 5");
        assert!(p.private.is_empty());
        assert_eq!(p.post.decrypt_stages(), 1);
        assert_eq!(p.post.filtered_predicates().len(), 1);
        assert!(p.public[0].plain_predicates().is_empty());
        // Only identifiers leave for the public cloud, never the comparison.
        assert!(!p.public_json().contains("Lt"));
    }

    #[test]
    fn private_attribute_splits_the_relation() {
        let p = planned(mark("a", "placement = \"private\""), "SELECT a, b FROM r WHERE b = 3");
        assert_eq!(p.public.len(), 1);
        assert_eq!(p.private.len(), 1);
        assert!(matches!(p.post, PostNode::Project { .. }));
        assert_eq!(p.public[0].plain_predicates().len(), 1);
    }

    #[test]
    fn plans_survive_serialization() {
        let p = planned(mark("b", "sensitive = true"), "SELECT a, d FROM r, s WHERE b = c");
        assert_eq!(HybridPlan::from_json(&p.to_json()).unwrap().public, p.public);
    }
}
