//! Domain partitioning of sensitive attributes.
//!
//! Each sensitive attribute gets a [`BucketScheme`]: its domain is cut into
//! disjoint partitions and every partition carries an opaque identifier
//! derived from a keyed SHA-256. Values map to the identifier of their
//! partition, and comparison predicates map to sets of identifiers that are
//! guaranteed to contain every matching value's identifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::catalog::{AttrRef, AttributeMeta, Catalog, RelationStats};
use crate::error::{Error, Result};
use crate::queryir::{CompareOp, JoinKey, Predicate};
use crate::value::{Datatype, Value};

/// Regular text partitions: `a`-`z` then `0`-`9`.
pub const TEXT_PARTITIONS: usize = 36;

/// Identifier width in bytes.
pub const ID_WIDTH: usize = 8;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionId(pub [u8; ID_WIDTH]);

impl PartitionId {
    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| Error::Parse(format!("partition id {s:?}: {e}")))?;
        let arr: [u8; ID_WIDTH] = bytes
            .try_into()
            .map_err(|_| Error::Parse(format!("partition id {s:?}: expected {ID_WIDTH} bytes")))?;
        Ok(PartitionId(arr))
    }
}

impl fmt::Debug for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.to_hex())
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for PartitionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PartitionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PartitionId::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Partition count for a storage domain: `floor(log2(max - min))`, at least 1.
pub fn compute_num_partitions(min: f64, max: f64) -> Result<u32> {
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err(Error::Domain(format!("invalid domain [{min}, {max}]")));
    }
    let span = max - min;
    if span <= 1.0 {
        return Ok(1);
    }
    Ok((span.log2().floor() as u32).max(1))
}

/// Storage-type bounds used to derive the default partition counts.
pub const INTEGER_DOMAIN: (f64, f64) = (-2_147_483_646.0, 2_147_483_647.0);
pub const DECIMAL_DOMAIN: (f64, f64) = (-9_999_999_999.99, 9_999_999_999.99);

/// Partition counts per datatype. Dates are bucketized like integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub integer: u32,
    pub decimal: u32,
    pub date: u32,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        let integer = compute_num_partitions(INTEGER_DOMAIN.0, INTEGER_DOMAIN.1).expect("valid");
        let decimal = compute_num_partitions(DECIMAL_DOMAIN.0, DECIMAL_DOMAIN.1).expect("valid");
        Self {
            integer,
            decimal,
            date: integer,
        }
    }
}

impl PartitionConfig {
    /// Same count for every ordered datatype; text stays at 36.
    pub fn uniform(p: u32) -> Self {
        Self {
            integer: p,
            decimal: p,
            date: p,
        }
    }

    pub fn for_datatype(&self, datatype: Datatype) -> u32 {
        match datatype {
            Datatype::Integer => self.integer,
            Datatype::Decimal => self.decimal,
            Datatype::Date => self.date,
            Datatype::Text => TEXT_PARTITIONS as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Partitioning {
    /// Equal-width cut points over the ordinal domain; partition `k` is
    /// `[b[k], b[k+1])`. The first and last partitions also absorb values
    /// below `b[0]` and above the last cut, which is how out-of-domain values
    /// clamp.
    Range { boundaries: Vec<i64> },
    /// Lowercased first character; the identifier after the 36 regular
    /// partitions belongs to the overflow partition.
    FirstChar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketScheme {
    pub attribute: AttrRef,
    pub datatype: Datatype,
    pub partitioning: Partitioning,
    pub ident_ids: Vec<PartitionId>,
}

fn ident(key: &[u8], attr: &AttrRef, ordinal: usize, round: u8) -> PartitionId {
    let mut h = Sha256::new();
    h.update(key);
    h.update(attr.relation.as_bytes());
    h.update(b".");
    h.update(attr.attribute.as_bytes());
    h.update([0u8]);
    h.update((ordinal as u32).to_be_bytes());
    h.update([round]);
    let digest = h.finalize();
    let mut id = [0u8; ID_WIDTH];
    id.copy_from_slice(&digest[..ID_WIDTH]);
    PartitionId(id)
}

fn ident_ids(key: &[u8], attr: &AttrRef, count: usize) -> Vec<PartitionId> {
    // Truncated hashes can collide; re-derive with a new round until distinct.
    for round in 0..=u8::MAX {
        let ids: Vec<_> = (0..count).map(|k| ident(key, attr, k, round)).collect();
        let distinct: BTreeSet<_> = ids.iter().collect();
        if distinct.len() == ids.len() {
            return ids;
        }
    }
    unreachable!("256 rounds of 64-bit identifier collisions")
}

/// Builds the scheme for one attribute. Text attributes always get 36
/// partitions; ordered domains get equal-width partitions over the observed
/// `[min, max]`.
pub fn build_scheme(
    attr: &AttributeMeta,
    stats: &RelationStats,
    partition_count: u32,
    ident_key: &[u8],
) -> Result<BucketScheme> {
    let attr_ref = attr.attr_ref();
    if partition_count == 0 {
        return Err(Error::Domain(format!("{attr_ref}: partition count must be positive")));
    }
    let col = stats.column(&attr.name)?;
    let partitioning = match attr.datatype {
        Datatype::Text => Partitioning::FirstChar,
        Datatype::Integer | Datatype::Decimal | Datatype::Date => {
            let ord = |v: &Option<Value>| v.as_ref().and_then(Value::ordinal);
            let (min, max) = match (ord(&col.min), ord(&col.max)) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => (0, 0),
            };
            if max < min {
                return Err(Error::Domain(format!("{attr_ref}: max < min")));
            }
            let span = (max as i128) - (min as i128) + 1;
            let mut p = partition_count as i128;
            let distinct = col.distinct_count.max(1) as i128;
            if p > distinct {
                log::debug!(
                    "{attr_ref}: partition count {partition_count} exceeds {distinct} distinct values; clamped"
                );
                p = distinct;
            }
            p = p.min(span).max(1);
            let boundaries = (0..=p)
                .map(|k| (min as i128 + k * span / p) as i64)
                .collect();
            Partitioning::Range { boundaries }
        }
    };
    let count = match &partitioning {
        Partitioning::Range { boundaries } => boundaries.len() - 1,
        Partitioning::FirstChar => TEXT_PARTITIONS + 1,
    };
    Ok(BucketScheme {
        ident_ids: ident_ids(ident_key, &attr_ref, count),
        attribute: attr_ref,
        datatype: attr.datatype,
        partitioning,
    })
}

fn first_char_partition(s: &str) -> usize {
    match s.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some(c @ 'a'..='z') => c as usize - 'a' as usize,
        Some(c @ '0'..='9') => 26 + (c as usize - '0' as usize),
        _ => TEXT_PARTITIONS,
    }
}

impl BucketScheme {
    /// Number of regular partitions (36 for text; the overflow partition is
    /// not counted).
    pub fn partition_count(&self) -> usize {
        match &self.partitioning {
            Partitioning::Range { boundaries } => boundaries.len() - 1,
            Partitioning::FirstChar => TEXT_PARTITIONS,
        }
    }

    pub fn ids(&self) -> &[PartitionId] {
        &self.ident_ids
    }

    /// Partition index of `v`. Out-of-domain values clamp to the nearest
    /// boundary partition.
    pub fn partition_of(&self, v: &Value) -> usize {
        match (&self.partitioning, v) {
            (Partitioning::FirstChar, Value::Text(s)) => first_char_partition(s),
            (Partitioning::FirstChar, other) => first_char_partition(&other.to_string()),
            (Partitioning::Range { boundaries }, v) => {
                let Some(x) = v.ordinal() else {
                    debug_assert!(false, "non-ordered value {v:?} on a range scheme");
                    return 0;
                };
                let last = boundaries.len() - 2;
                boundaries.partition_point(|b| *b <= x).saturating_sub(1).min(last)
            }
        }
    }

    pub fn map_value(&self, v: &Value) -> PartitionId {
        self.ident_ids[self.partition_of(v)]
    }

    /// Inclusive ordinal bounds of partition `k`; `None` means unbounded.
    fn bounds(&self, k: usize) -> (Option<i64>, Option<i64>) {
        match &self.partitioning {
            Partitioning::Range { boundaries } => {
                let last = boundaries.len() - 2;
                let lo = (k > 0).then(|| boundaries[k]);
                let hi = (k < last).then(|| boundaries[k + 1] - 1);
                (lo, hi)
            }
            Partitioning::FirstChar => (None, None),
        }
    }

    /// Identifiers of every partition intersecting the inclusive ordinal
    /// range `[lo, hi]`.
    pub fn ids_for_range(&self, lo: Option<i64>, hi: Option<i64>) -> BTreeSet<PartitionId> {
        if let (Some(l), Some(h)) = (lo, hi) {
            if l > h {
                return BTreeSet::new();
            }
        }
        match &self.partitioning {
            Partitioning::FirstChar => self.ident_ids.iter().copied().collect(),
            Partitioning::Range { .. } => (0..self.partition_count())
                .filter(|&k| {
                    let (plo, phi) = self.bounds(k);
                    let below = matches!((hi, plo), (Some(h), Some(p)) if h < p);
                    let above = matches!((lo, phi), (Some(l), Some(p)) if l > p);
                    !below && !above
                })
                .map(|k| self.ident_ids[k])
                .collect(),
        }
    }

    fn ids_for_compare(&self, op: CompareOp, v: &Value) -> Result<BTreeSet<PartitionId>> {
        match &self.partitioning {
            Partitioning::FirstChar => {
                if !matches!(v, Value::Text(_)) {
                    return Err(Error::Unmappable(format!(
                        "{}: non-text constant {v}",
                        self.attribute
                    )));
                }
                Ok(match op {
                    CompareOp::Eq => [self.map_value(v)].into(),
                    // Lowercasing breaks lexicographic order; a range can
                    // touch any first character.
                    _ => self.ident_ids.iter().copied().collect(),
                })
            }
            Partitioning::Range { .. } => {
                let x = v.ordinal().ok_or_else(|| {
                    Error::Unmappable(format!("{}: non-ordered constant {v}", self.attribute))
                })?;
                let (lo, hi) = match op {
                    CompareOp::Eq => (Some(x), Some(x)),
                    CompareOp::Lt => (None, x.checked_sub(1)),
                    CompareOp::Le => (None, Some(x)),
                    CompareOp::Gt => (x.checked_add(1), None),
                    CompareOp::Ge => (Some(x), None),
                };
                // checked_* overflow means the range is empty.
                if (op == CompareOp::Lt && hi.is_none()) || (op == CompareOp::Gt && lo.is_none()) {
                    return Ok(BTreeSet::new());
                }
                Ok(self.ids_for_range(lo, hi))
            }
        }
    }

    /// Identifier pairs `(self, other)` whose partitions can hold equal
    /// values.
    pub fn join_pairs(&self, other: &BucketScheme) -> Result<BTreeSet<(PartitionId, PartitionId)>> {
        match (&self.partitioning, &other.partitioning) {
            (Partitioning::FirstChar, Partitioning::FirstChar) => Ok(self
                .ident_ids
                .iter()
                .zip(&other.ident_ids)
                .map(|(a, b)| (*a, *b))
                .collect()),
            (Partitioning::Range { .. }, Partitioning::Range { .. }) => {
                let mut pairs = BTreeSet::new();
                for i in 0..self.partition_count() {
                    let (lo, hi) = self.bounds(i);
                    for j in other.ids_for_range(lo, hi) {
                        pairs.insert((self.ident_ids[i], j));
                    }
                }
                Ok(pairs)
            }
            _ => Err(Error::Unmappable(format!(
                "join between differently typed schemes {} and {}",
                self.attribute, other.attribute
            ))),
        }
    }
}

/// Selection over an index column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedCondition {
    pub column: AttrRef,
    pub identifier_set: BTreeSet<PartitionId>,
    /// Kept for the private-side post-filter; never shipped to the public
    /// cloud.
    #[serde(skip)]
    pub original: Option<Predicate>,
}

/// Equi-join over two index columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedJoin {
    pub left: AttrRef,
    pub right: AttrRef,
    pub pairs: BTreeSet<(PartitionId, PartitionId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MappedPredicate {
    /// No sensitive attribute involved.
    Unchanged(Predicate),
    Selection(MappedCondition),
    Join(MappedJoin),
}

/// Schemes for every sensitive attribute, keyed by attribute.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SchemeRegistry {
    schemes: BTreeMap<AttrRef, BucketScheme>,
    config: PartitionConfig,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    config: Option<PartitionConfig>,
    schemes: Vec<BucketScheme>,
}

impl Serialize for SchemeRegistry {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RegistryFile {
            config: Some(self.config),
            schemes: self.schemes.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SchemeRegistry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = RegistryFile::deserialize(d)?;
        Ok(SchemeRegistry {
            config: file.config.unwrap_or_default(),
            schemes: file
                .schemes
                .into_iter()
                .map(|s| (s.attribute.clone(), s))
                .collect(),
        })
    }
}

impl SchemeRegistry {
    /// Builds schemes for every sensitive attribute of the catalog.
    pub fn build(catalog: &Catalog, config: PartitionConfig, ident_key: &[u8]) -> Result<Self> {
        let mut schemes = BTreeMap::new();
        for attr in catalog.attributes().iter().filter(|a| a.sensitive) {
            let stats = catalog.stats(&attr.relation)?;
            let p = config.for_datatype(attr.datatype);
            schemes.insert(attr.attr_ref(), build_scheme(attr, stats, p, ident_key)?);
        }
        Ok(Self { schemes, config })
    }

    pub fn from_schemes(schemes: impl IntoIterator<Item = BucketScheme>) -> Self {
        Self {
            schemes: schemes.into_iter().map(|s| (s.attribute.clone(), s)).collect(),
            config: PartitionConfig::default(),
        }
    }

    pub fn config(&self) -> PartitionConfig {
        self.config
    }

    pub fn get(&self, attr: &AttrRef) -> Option<&BucketScheme> {
        self.schemes.get(attr)
    }

    pub fn schemes(&self) -> impl Iterator<Item = &BucketScheme> {
        self.schemes.values()
    }

    pub fn len(&self) -> usize {
        self.schemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemes.is_empty()
    }

    /// Lifts a predicate to the index columns. Predicates without a
    /// bucketized attribute pass through unchanged.
    pub fn map_condition(&self, predicate: &Predicate) -> Result<MappedPredicate> {
        match predicate {
            Predicate::Compare { attr, op, value } => match self.get(attr) {
                None => Ok(MappedPredicate::Unchanged(predicate.clone())),
                Some(scheme) => Ok(MappedPredicate::Selection(MappedCondition {
                    column: attr.clone(),
                    identifier_set: scheme.ids_for_compare(*op, value)?,
                    original: Some(predicate.clone()),
                })),
            },
            Predicate::Between { attr, low, high } => match self.get(attr) {
                None => Ok(MappedPredicate::Unchanged(predicate.clone())),
                Some(scheme) => {
                    let ids = match &scheme.partitioning {
                        Partitioning::FirstChar => scheme.ident_ids.iter().copied().collect(),
                        Partitioning::Range { .. } => {
                            let (lo, hi) = (low.ordinal(), high.ordinal());
                            if lo.is_none() || hi.is_none() {
                                return Err(Error::Unmappable(format!(
                                    "{attr}: non-ordered BETWEEN bounds"
                                )));
                            }
                            scheme.ids_for_range(lo, hi)
                        }
                    };
                    Ok(MappedPredicate::Selection(MappedCondition {
                        column: attr.clone(),
                        identifier_set: ids,
                        original: Some(predicate.clone()),
                    }))
                }
            },
            Predicate::EquiJoin(JoinKey { left, right }) => {
                match (self.get(left), self.get(right)) {
                    (None, None) => Ok(MappedPredicate::Unchanged(predicate.clone())),
                    (Some(l), Some(r)) => Ok(MappedPredicate::Join(MappedJoin {
                        left: left.clone(),
                        right: right.clone(),
                        pairs: l.join_pairs(r)?,
                    })),
                    _ => Err(Error::Unmappable(format!(
                        "join {left} = {right} pairs a bucketized attribute with a plain one"
                    ))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Cloud, ColumnStats};

    fn int_attr(distinct: u64, min: i64, max: i64) -> (AttributeMeta, RelationStats) {
        let meta = AttributeMeta {
            name: "a".into(),
            relation: "r".into(),
            datatype: Datatype::Integer,
            sensitive: true,
            size: 1,
            placement: Cloud::Public,
        };
        let stats = RelationStats {
            relation: "r".into(),
            row_count: distinct.max(1000),
            columns: [(
                "a".to_string(),
                ColumnStats {
                    distinct_count: distinct,
                    min: Some(Value::Int(min)),
                    max: Some(Value::Int(max)),
                    byte_width: 8,
                },
            )]
            .into(),
        };
        (meta, stats)
    }

    fn text_attr() -> (AttributeMeta, RelationStats) {
        let (mut meta, mut stats) = int_attr(5, 0, 0);
        meta.datatype = Datatype::Text;
        let col = stats.columns.get_mut("a").unwrap();
        col.min = Some(Value::Text("AUTOMOBILE".into()));
        col.max = Some(Value::Text("MACHINERY".into()));
        (meta, stats)
    }

    fn scheme_0_99(p: u32) -> BucketScheme {
        let (m, s) = int_attr(100, 0, 99);
        build_scheme(&m, &s, p, b"k").unwrap()
    }

    #[test]
    fn eq2_partition_counts() {
        assert_eq!(compute_num_partitions(-2_147_483_646.0, 2_147_483_647.0).unwrap(), 31);
        assert_eq!(compute_num_partitions(-9_999_999_999.99, 9_999_999_999.99).unwrap(), 34);
        assert_eq!(compute_num_partitions(0.0, 1.0).unwrap(), 1);
        assert_eq!(compute_num_partitions(5.0, 5.0).unwrap(), 1);
        assert!(matches!(compute_num_partitions(2.0, 1.0), Err(Error::Domain(_))));
        let d = PartitionConfig::default();
        assert_eq!((d.integer, d.decimal, d.date), (31, 34, 31));
    }

    #[test]
    fn equal_width_boundaries_and_preimages() {
        let s = scheme_0_99(4);
        assert_eq!(
            s.partitioning,
            Partitioning::Range {
                boundaries: vec![0, 25, 50, 75, 100]
            }
        );
        let distinct: BTreeSet<_> = s.ids().iter().collect();
        assert_eq!(distinct.len(), 4);
        // Exhaustive preimage sizes.
        let mut counts = BTreeMap::new();
        for v in 0..100 {
            *counts.entry(s.map_value(&Value::Int(v))).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| c == 25));
        assert_eq!(s.map_value(&Value::Int(26)), s.ids()[1]);
    }

    #[test]
    fn single_partition_and_clamping() {
        let s = scheme_0_99(1);
        assert_eq!(s.partition_count(), 1);
        for v in [-5, 0, 50, 99, 1000] {
            assert_eq!(s.map_value(&Value::Int(v)), s.ids()[0]);
        }
        let s4 = scheme_0_99(4);
        assert_eq!(s4.map_value(&Value::Int(-7)), s4.ids()[0]);
        assert_eq!(s4.map_value(&Value::Int(1_000)), s4.ids()[3]);
    }

    #[test]
    fn partition_count_clamps_to_distinct() {
        let (m, s) = int_attr(3, 0, 99);
        let scheme = build_scheme(&m, &s, 10, b"k").unwrap();
        assert_eq!(scheme.partition_count(), 3);
    }

    #[test]
    fn text_scheme_has_36_partitions() {
        let (m, s) = text_attr();
        let scheme = build_scheme(&m, &s, 3, b"k").unwrap();
        assert_eq!(scheme.partition_count(), 36);
        assert_eq!(scheme.ids().len(), 37);
        let b = scheme.map_value(&Value::Text("BUILDING".into()));
        assert_eq!(b, scheme.ids()[1]);
        assert_eq!(b, scheme.map_value(&Value::Text("bricks".into())));
        assert_eq!(scheme.map_value(&Value::Text("9lives".into())), scheme.ids()[35]);
        assert_eq!(scheme.map_value(&Value::Text("#x".into())), scheme.ids()[36]);
        assert_eq!(scheme.map_value(&Value::Text(String::new())), scheme.ids()[36]);
    }

    #[test]
    fn range_condition_matches_brute_force() {
        let s = scheme_0_99(4);
        let reg = SchemeRegistry::from_schemes([s.clone()]);
        let attr = AttrRef::new("r", "a");
        let pred = Predicate::Compare {
            attr: attr.clone(),
            op: CompareOp::Gt,
            value: Value::Int(60),
        };
        let MappedPredicate::Selection(m) = reg.map_condition(&pred).unwrap() else {
            panic!("expected mapped selection");
        };
        let brute: BTreeSet<_> = (61..100).map(|v| s.map_value(&Value::Int(v))).collect();
        assert_eq!(m.identifier_set, brute);
        assert_eq!(m.identifier_set, [s.ids()[2], s.ids()[3]].into());

        let eq = Predicate::Compare {
            attr,
            op: CompareOp::Eq,
            value: Value::Int(7),
        };
        let MappedPredicate::Selection(m) = reg.map_condition(&eq).unwrap() else {
            panic!()
        };
        assert_eq!(m.identifier_set, [s.map_value(&Value::Int(7))].into());
    }

    #[test]
    fn non_sensitive_predicates_pass_through() {
        let reg = SchemeRegistry::default();
        let pred = Predicate::Compare {
            attr: AttrRef::new("r", "b"),
            op: CompareOp::Lt,
            value: Value::Int(1),
        };
        assert_eq!(
            reg.map_condition(&pred).unwrap(),
            MappedPredicate::Unchanged(pred)
        );
    }

    #[test]
    fn join_pairs_cover_equal_values() {
        let (m1, s1) = int_attr(100, 0, 99);
        let (mut m2, mut s2) = int_attr(50, 10, 59);
        m2.name = "b".into();
        s2.columns = [("b".to_string(), s2.columns["a"].clone())].into();
        let a = build_scheme(&m1, &s1, 4, b"k").unwrap();
        let b = build_scheme(&m2, &s2, 5, b"k").unwrap();
        let pairs = a.join_pairs(&b).unwrap();
        for v in -10..120 {
            let x = Value::Int(v);
            assert!(pairs.contains(&(a.map_value(&x), b.map_value(&x))), "value {v}");
        }
        let reg = SchemeRegistry::from_schemes([a]);
        let mixed = Predicate::EquiJoin(JoinKey {
            left: AttrRef::new("r", "a"),
            right: AttrRef::new("r", "b"),
        });
        assert!(matches!(reg.map_condition(&mixed), Err(Error::Unmappable(_))));
    }

    #[test]
    fn identifiers_depend_on_key() {
        let (m, s) = int_attr(100, 0, 99);
        let a = build_scheme(&m, &s, 4, b"one").unwrap();
        let b = build_scheme(&m, &s, 4, b"two").unwrap();
        assert_ne!(a.ids(), b.ids());
    }

    #[test]
    fn registry_serializes() {
        let reg = SchemeRegistry::from_schemes([scheme_0_99(4)]);
        let json = serde_json::to_string(&reg).unwrap();
        let back: SchemeRegistry = serde_json::from_str(&json).unwrap();
        assert_eq!(back.get(&AttrRef::new("r", "a")), reg.get(&AttrRef::new("r", "a")));
    }
}
