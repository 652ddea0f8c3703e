//! Schema, attribute metadata, statistics, placement state and private-cloud
//! capacity.
//!
//! A [`Catalog`] is immutable once built; placement changes go through
//! [`Catalog::apply_placement`] and produce a new value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::partitioner::PlacementPlan;
use crate::value::{Datatype, Value};

/// Default tuple-id column name replicated into every vertical fragment.
pub const DEFAULT_TUPLE_ID: &str = "_tid";

/// Byte width charged for a tuple-id cell.
pub const TUPLE_ID_WIDTH: u64 = 8;

pub const DEFAULT_SIZE_UNIT: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttrRef {
    pub relation: String,
    pub attribute: String,
}

impl AttrRef {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.attribute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cloud {
    Public,
    Private,
}

impl fmt::Display for Cloud {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cloud::Public => "public",
            Cloud::Private => "private",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeMeta {
    pub name: String,
    pub relation: String,
    pub datatype: Datatype,
    pub sensitive: bool,
    /// Storage units (see [`Catalog::size_unit`]).
    pub size: u64,
    pub placement: Cloud,
}

impl AttributeMeta {
    pub fn attr_ref(&self) -> AttrRef {
        AttrRef::new(&self.relation, &self.name)
    }

    /// Stored as etuples: public and sensitive.
    pub fn is_encrypted(&self) -> bool {
        self.sensitive && self.placement == Cloud::Public
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnStats {
    pub distinct_count: u64,
    pub min: Option<Value>,
    pub max: Option<Value>,
    /// Average plain width in bytes.
    pub byte_width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationStats {
    pub relation: String,
    pub row_count: u64,
    pub columns: BTreeMap<String, ColumnStats>,
}

impl RelationStats {
    pub fn column(&self, attribute: &str) -> Result<&ColumnStats> {
        self.columns
            .get(attribute)
            .ok_or_else(|| Error::MissingStats(format!("{}.{}", self.relation, attribute)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub tuple_id: String,
    /// Attribute names in declaration order.
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    relations: Vec<RelationSchema>,
    attributes: Vec<AttributeMeta>,
    stats: BTreeMap<String, RelationStats>,
    capacity: u64,
    size_unit: u64,
    index: HashMap<AttrRef, usize>,
}

impl Catalog {
    /// Builds and validates a catalog.
    pub fn new(
        relations: Vec<RelationSchema>,
        attributes: Vec<AttributeMeta>,
        stats: BTreeMap<String, RelationStats>,
        capacity: u64,
        size_unit: u64,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(attributes.len());
        for (i, a) in attributes.iter().enumerate() {
            if index.insert(a.attr_ref(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate attribute {}.{}",
                    a.relation, a.name
                )));
            }
        }
        let catalog = Self {
            relations,
            attributes,
            stats,
            capacity,
            size_unit,
            index,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<()> {
        if self.size_unit == 0 {
            return Err(Error::Validation("size_unit must be positive".into()));
        }
        let mut names = BTreeSet::new();
        for rel in &self.relations {
            if !names.insert(rel.name.as_str()) {
                return Err(Error::Validation(format!("duplicate relation {}", rel.name)));
            }
            if rel.attributes.contains(&rel.tuple_id) {
                return Err(Error::Validation(format!(
                    "relation {} declares its tuple id {} as an attribute",
                    rel.name, rel.tuple_id
                )));
            }
            for a in &rel.attributes {
                if !self.index.contains_key(&AttrRef::new(&rel.name, a)) {
                    return Err(Error::Validation(format!(
                        "relation {} lists unknown attribute {a}",
                        rel.name
                    )));
                }
            }
        }
        for a in &self.attributes {
            if !names.contains(a.relation.as_str()) {
                return Err(Error::Validation(format!(
                    "attribute {} belongs to unknown relation {}",
                    a.name, a.relation
                )));
            }
        }
        for rel in &self.relations {
            let stats = self
                .stats
                .get(&rel.name)
                .ok_or_else(|| Error::MissingStats(rel.name.clone()))?;
            for a in &rel.attributes {
                let meta = &self.attributes[self.index[&AttrRef::new(&rel.name, a)]];
                let col = stats.column(a)?;
                if col.distinct_count > stats.row_count {
                    return Err(Error::Validation(format!(
                        "{}.{a}: distinct count {} exceeds row count {}",
                        rel.name, col.distinct_count, stats.row_count
                    )));
                }
                for bound in [&col.min, &col.max].into_iter().flatten() {
                    if bound.datatype() != Some(meta.datatype) {
                        return Err(Error::Validation(format!(
                            "{}.{a}: statistic {bound} is not of type {}",
                            rel.name, meta.datatype
                        )));
                    }
                }
                if let (Some(lo), Some(hi)) = (&col.min, &col.max) {
                    if lo > hi {
                        return Err(Error::Validation(format!(
                            "{}.{a}: min {lo} exceeds max {hi}",
                            rel.name
                        )));
                    }
                }
            }
        }
        let used = self.private_size();
        if used > self.capacity {
            return Err(Error::Capacity {
                used,
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn attributes(&self) -> &[AttributeMeta] {
        &self.attributes
    }

    pub fn attribute(&self, attr: &AttrRef) -> Option<&AttributeMeta> {
        self.index.get(attr).map(|&i| &self.attributes[i])
    }

    pub fn attribute_or_err(&self, attr: &AttrRef) -> Result<&AttributeMeta> {
        self.attribute(attr)
            .ok_or_else(|| Error::Validation(format!("unknown attribute {attr}")))
    }

    pub fn attributes_of<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = &'a AttributeMeta> {
        self.attributes.iter().filter(move |a| a.relation == relation)
    }

    pub fn stats(&self, relation: &str) -> Result<&RelationStats> {
        self.stats
            .get(relation)
            .ok_or_else(|| Error::MissingStats(relation.to_string()))
    }

    pub fn all_stats(&self) -> &BTreeMap<String, RelationStats> {
        &self.stats
    }

    pub fn column_stats(&self, attr: &AttrRef) -> Result<&ColumnStats> {
        self.stats(&attr.relation)?.column(&attr.attribute)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn size_unit(&self) -> u64 {
        self.size_unit
    }

    pub fn total_size(&self) -> u64 {
        self.attributes.iter().map(|a| a.size).sum()
    }

    pub fn private_size(&self) -> u64 {
        self.attributes
            .iter()
            .filter(|a| a.placement == Cloud::Private)
            .map(|a| a.size)
            .sum()
    }

    pub fn private_set(&self) -> BTreeSet<AttrRef> {
        self.attributes
            .iter()
            .filter(|a| a.placement == Cloud::Private)
            .map(AttributeMeta::attr_ref)
            .collect()
    }

    pub fn tuple_id(&self, relation: &str) -> Option<&str> {
        self.relation(relation).map(|r| r.tuple_id.as_str())
    }

    /// Resolves a possibly unqualified column name against the given sources.
    pub fn resolve(&self, relation: Option<&str>, name: &str, sources: &[String]) -> Result<AttrRef> {
        if let Some(rel) = relation {
            if !sources.iter().any(|s| s == rel) {
                return Err(Error::Validation(format!(
                    "relation {rel} is not listed in FROM"
                )));
            }
            let attr = AttrRef::new(rel, name);
            self.attribute_or_err(&attr)?;
            return Ok(attr);
        }
        let mut found = sources
            .iter()
            .map(|s| AttrRef::new(s, name))
            .filter(|a| self.index.contains_key(a));
        match (found.next(), found.next()) {
            (Some(a), None) => Ok(a),
            (None, _) => Err(Error::Validation(format!("unknown column {name}"))),
            (Some(_), Some(_)) => Err(Error::Validation(format!("ambiguous column {name}"))),
        }
    }

    /// Same schema with a different capacity.
    pub fn with_capacity(&self, capacity: u64) -> Result<Catalog> {
        let mut next = self.clone();
        next.capacity = capacity;
        next.validate()?;
        Ok(next)
    }

    /// Same schema with exactly `sensitive` marked sensitive.
    pub fn with_sensitivity(&self, sensitive: &BTreeSet<AttrRef>) -> Catalog {
        let mut next = self.clone();
        for a in &mut next.attributes {
            a.sensitive = sensitive.contains(&a.attr_ref());
        }
        next
    }

    /// Same schema with every attribute public.
    pub fn all_public(&self) -> Catalog {
        let mut next = self.clone();
        for a in &mut next.attributes {
            a.placement = Cloud::Public;
        }
        next
    }

    /// Splits the attribute set per `plan`.
    ///
    /// Tuple ids are not attributes; every fragment of every relation
    /// carries its relation's tuple id regardless of the plan.
    pub fn apply_placement(&self, plan: &PlacementPlan) -> Result<Catalog> {
        let all: BTreeSet<AttrRef> = self.attributes.iter().map(AttributeMeta::attr_ref).collect();
        if let Some(x) = plan.private_set.intersection(&plan.public_set).next() {
            return Err(Error::Coverage(format!("{x} is placed on both clouds")));
        }
        for a in plan.private_set.iter().chain(&plan.public_set) {
            if !all.contains(a) {
                return Err(Error::Coverage(format!("{a} is not in the catalog")));
            }
        }
        if let Some(missing) = all
            .iter()
            .find(|a| !plan.private_set.contains(*a) && !plan.public_set.contains(*a))
        {
            return Err(Error::Coverage(format!("{missing} is not covered by the plan")));
        }
        let mut next = self.clone();
        for a in &mut next.attributes {
            a.placement = if plan.private_set.contains(&a.attr_ref()) {
                Cloud::Private
            } else {
                Cloud::Public
            };
        }
        let used = next.private_size();
        if used > next.capacity {
            return Err(Error::Capacity {
                used,
                capacity: next.capacity,
            });
        }
        Ok(next)
    }

    /// Short digest of the placement and sensitivity state. Plans and stores
    /// compiled under different placements refuse to run together.
    pub fn placement_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.attributes {
            h.update(a.relation.as_bytes());
            h.update(b".");
            h.update(a.name.as_bytes());
            h.update([a.placement as u8, a.sensitive as u8, 0xff]);
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn from_toml_str(text: &str) -> Result<Catalog> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| Error::Parse(format!("catalog: {e}")))?;
        file.into_catalog()
    }

    pub fn to_toml_string(&self) -> String {
        let file = CatalogFile::from_catalog(self);
        toml::to_string_pretty(&file).expect("catalog serializes")
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Catalog::from_toml_str(&text)
}

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, catalog.to_toml_string()).map_err(|e| Error::io(path, e))
}

// On-disk layout.
//
//     capacity = 120
//     size_unit = 1024
//
//     [[relation]]
//     name = "customer"
//     tuple_id = "_tid"
//     attributes = [
//         { name = "c_custkey", type = "integer", sensitive = false, size = 2 },
//     ]
//
//     [stats.customer]
//     rows = 150
//     [stats.customer.columns.c_custkey]
//     distinct = 150
//     min = "1"
//     max = "150"
//     width = 8

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    capacity: u64,
    #[serde(default = "default_size_unit")]
    size_unit: u64,
    #[serde(default)]
    relation: Vec<RelationEntry>,
    #[serde(default)]
    stats: BTreeMap<String, StatsEntry>,
}

fn default_size_unit() -> u64 {
    DEFAULT_SIZE_UNIT
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationEntry {
    name: String,
    #[serde(default)]
    tuple_id: Option<String>,
    attributes: Vec<AttributeEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeEntry {
    name: String,
    #[serde(rename = "type")]
    datatype: Datatype,
    #[serde(default)]
    sensitive: bool,
    size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    placement: Option<Cloud>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsEntry {
    rows: u64,
    #[serde(default)]
    columns: BTreeMap<String, ColumnStatsEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnStatsEntry {
    distinct: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<String>,
    width: u32,
}

impl CatalogFile {
    fn into_catalog(self) -> Result<Catalog> {
        let mut relations = Vec::new();
        let mut attributes = Vec::new();
        let mut types: HashMap<(String, String), Datatype> = HashMap::new();
        for rel in self.relation {
            let mut names = Vec::new();
            for a in rel.attributes {
                types.insert((rel.name.clone(), a.name.clone()), a.datatype);
                names.push(a.name.clone());
                attributes.push(AttributeMeta {
                    name: a.name,
                    relation: rel.name.clone(),
                    datatype: a.datatype,
                    sensitive: a.sensitive,
                    size: a.size,
                    placement: a.placement.unwrap_or(Cloud::Public),
                });
            }
            relations.push(RelationSchema {
                name: rel.name,
                tuple_id: rel.tuple_id.unwrap_or_else(|| DEFAULT_TUPLE_ID.to_string()),
                attributes: names,
            });
        }
        let mut stats = BTreeMap::new();
        for (rel, entry) in self.stats {
            let mut columns = BTreeMap::new();
            for (col, c) in entry.columns {
                let dt = *types.get(&(rel.clone(), col.clone())).ok_or_else(|| {
                    Error::Validation(format!("statistics for unknown attribute {rel}.{col}"))
                })?;
                let parse = |s: Option<String>| s.map(|s| Value::parse(dt, &s)).transpose();
                columns.insert(
                    col,
                    ColumnStats {
                        distinct_count: c.distinct,
                        min: parse(c.min)?,
                        max: parse(c.max)?,
                        byte_width: c.width,
                    },
                );
            }
            stats.insert(
                rel.clone(),
                RelationStats {
                    relation: rel,
                    row_count: entry.rows,
                    columns,
                },
            );
        }
        Catalog::new(relations, attributes, stats, self.capacity, self.size_unit)
    }

    fn from_catalog(catalog: &Catalog) -> Self {
        let relation = catalog
            .relations
            .iter()
            .map(|r| RelationEntry {
                name: r.name.clone(),
                tuple_id: Some(r.tuple_id.clone()),
                attributes: r
                    .attributes
                    .iter()
                    .map(|a| {
                        let m = catalog.attribute(&AttrRef::new(&r.name, a)).expect("indexed");
                        AttributeEntry {
                            name: m.name.clone(),
                            datatype: m.datatype,
                            sensitive: m.sensitive,
                            size: m.size,
                            placement: Some(m.placement),
                        }
                    })
                    .collect(),
            })
            .collect();
        let stats = catalog
            .stats
            .iter()
            .map(|(rel, s)| {
                let columns = s
                    .columns
                    .iter()
                    .map(|(c, cs)| {
                        (
                            c.clone(),
                            ColumnStatsEntry {
                                distinct: cs.distinct_count,
                                min: cs.min.as_ref().map(Value::to_string),
                                max: cs.max.as_ref().map(Value::to_string),
                                width: cs.byte_width,
                            },
                        )
                    })
                    .collect();
                (
                    rel.clone(),
                    StatsEntry {
                        rows: s.row_count,
                        columns,
                    },
                )
            })
            .collect();
        Self {
            capacity: catalog.capacity,
            size_unit: catalog.size_unit,
            relation,
            stats,
        }
    }
}
