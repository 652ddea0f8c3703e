use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bucketize::SchemeRegistry;
use crate::catalog::{AttrRef, Catalog, Cloud, TUPLE_ID_WIDTH};
use crate::crypto::{Cipher, ETuple, SecretKey};
use crate::error::{Error, Result};
use crate::value::Value;

/// Unpartitioned relation, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainTable {
    pub relation: String,
    pub tids: Vec<u64>,
    pub columns: Vec<(String, Vec<Value>)>,
}

impl PlainTable {
    pub fn len(&self) -> usize {
        self.tids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tids.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[Value]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// The first `n` rows.
    pub fn prefix(&self, n: usize) -> PlainTable {
        let n = n.min(self.len());
        PlainTable {
            relation: self.relation.clone(),
            tids: self.tids[..n].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(c, v)| (c.clone(), v[..n].to_vec()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Plain(Vec<Value>),
    Encrypted(Vec<ETuple>),
    /// Decrypted on demand; `None` for cells nothing asked for.
    Decrypted(Vec<Option<Value>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Plain(v) => v.len(),
            ColumnData::Encrypted(v) => v.len(),
            ColumnData::Decrypted(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn average_width(&self) -> f64 {
        let n = self.len().max(1) as f64;
        let total: u64 = match self {
            ColumnData::Plain(v) => v.iter().map(Value::byte_width).sum(),
            ColumnData::Encrypted(v) => v.iter().map(ETuple::byte_width).sum(),
            ColumnData::Decrypted(v) => v.iter().flatten().map(Value::byte_width).sum(),
        };
        total as f64 / n
    }
}

/// One vertical fragment of a relation in one store.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub relation: String,
    /// Name of the tuple-id column.
    pub tuple_id: String,
    pub tids: Vec<u64>,
    pub columns: Vec<(String, ColumnData)>,
    /// Average bytes per cell, parallel to `columns`.
    pub widths: Vec<f64>,
}

impl Table {
    pub fn new(
        relation: String,
        tuple_id: String,
        tids: Vec<u64>,
        columns: Vec<(String, ColumnData)>,
    ) -> Self {
        let widths = columns.iter().map(|(_, c)| c.average_width()).collect();
        Self {
            relation,
            tuple_id,
            tids,
            columns,
            widths,
        }
    }

    pub fn len(&self) -> usize {
        self.tids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tids.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    /// Bytes of the whole fragment, tuple ids included.
    pub fn bytes(&self) -> f64 {
        self.len() as f64 * (TUPLE_ID_WIDTH as f64 + self.widths.iter().sum::<f64>())
    }
}

/// Fragments held by one cloud.
#[derive(Debug, Clone, Default)]
pub struct Store {
    pub tables: BTreeMap<String, Arc<Table>>,
}

impl Store {
    pub fn get(&self, relation: &str) -> Result<&Arc<Table>> {
        self.tables
            .get(relation)
            .ok_or_else(|| Error::Execution(format!("no fragment of {relation} in this store")))
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Both clouds' stores under one placement.
#[derive(Debug, Clone)]
pub struct Stores {
    pub public: Store,
    pub private: Store,
    pub placement: String,
}

impl Stores {
    pub fn store(&self, cloud: Cloud) -> &Store {
        match cloud {
            Cloud::Public => &self.public,
            Cloud::Private => &self.private,
        }
    }

    /// Splits plaintext tables per the placed catalog, encrypting sensitive
    /// public columns.
    pub fn build(
        tables: &BTreeMap<String, PlainTable>,
        placed: &Catalog,
        schemes: &SchemeRegistry,
        key: &SecretKey,
        rng: &mut dyn RngCore,
    ) -> Result<Stores> {
        let cipher = Cipher::new(key);
        let mut public = Store::default();
        let mut private = Store::default();
        for rel in placed.relations() {
            let src = tables
                .get(&rel.name)
                .ok_or_else(|| Error::Execution(format!("no data for relation {}", rel.name)))?;
            let mut pu = Vec::new();
            let mut pr = Vec::new();
            for a in placed.attributes_of(&rel.name) {
                let values = src.column(&a.name).ok_or_else(|| {
                    Error::Execution(format!("data for {} lacks column {}", rel.name, a.name))
                })?;
                if a.placement == Cloud::Private {
                    pr.push((a.name.clone(), ColumnData::Plain(values.to_vec())));
                } else if a.sensitive {
                    let scheme = schemes.get(&a.attr_ref()).ok_or_else(|| {
                        Error::Planning(format!("no bucket scheme for {}", a.attr_ref()))
                    })?;
                    let enc = values.iter().map(|v| cipher.encrypt(scheme, v, rng)).collect();
                    pu.push((a.name.clone(), ColumnData::Encrypted(enc)));
                } else {
                    pu.push((a.name.clone(), ColumnData::Plain(values.to_vec())));
                }
            }
            if !pu.is_empty() {
                public.tables.insert(
                    rel.name.clone(),
                    Arc::new(Table::new(rel.name.clone(), rel.tuple_id.clone(), src.tids.clone(), pu)),
                );
            }
            if !pr.is_empty() {
                private.tables.insert(
                    rel.name.clone(),
                    Arc::new(Table::new(rel.name.clone(), rel.tuple_id.clone(), src.tids.clone(), pr)),
                );
            }
        }
        Ok(Stores {
            public,
            private,
            placement: placed.placement_fingerprint(),
        })
    }
}

fn csv_path(dir: &Path, relation: &str) -> PathBuf {
    dir.join(format!("{relation}.csv"))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Execution(format!("{}: {other:?}", path.display())),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Execution(format!("{}: {other:?}", path.display())),
    })
}

/// Writes `<dir>/<relation>.csv` per table with a `tuple_id,attr...` header.
pub fn write_plaintext(catalog: &Catalog, tables: &BTreeMap<String, PlainTable>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in tables.values() {
        let tid = catalog.tuple_id(&t.relation).unwrap_or(crate::catalog::DEFAULT_TUPLE_ID);
        let path = csv_path(dir, &t.relation);
        let mut w = writer(&path)?;
        let mut header = vec![tid.to_string()];
        header.extend(t.columns.iter().map(|(c, _)| c.clone()));
        w.write_record(&header)?;
        for (i, tid) in t.tids.iter().enumerate() {
            let mut rec = vec![tid.to_string()];
            rec.extend(t.columns.iter().map(|(_, v)| v[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every relation of the catalog from `<dir>/<relation>.csv`.
pub fn read_plaintext(catalog: &Catalog, dir: &Path) -> Result<BTreeMap<String, PlainTable>> {
    let mut out = BTreeMap::new();
    for rel in catalog.relations() {
        let path = csv_path(dir, &rel.name);
        let mut r = reader(&path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.first() != Some(&rel.tuple_id) {
            return Err(Error::Execution(format!(
                "{}: first column must be {}",
                path.display(),
                rel.tuple_id
            )));
        }
        let mut types = Vec::new();
        for name in &header[1..] {
            types.push(catalog.attribute_or_err(&AttrRef::new(&rel.name, name))?.datatype);
        }
        let mut tids = Vec::new();
        let mut cols: Vec<Vec<Value>> = vec![Vec::new(); types.len()];
        for rec in r.records() {
            let rec = rec?;
            tids.push(parse_tid(&rec[0], &path)?);
            for (i, dt) in types.iter().enumerate() {
                cols[i].push(Value::parse(*dt, &rec[i + 1])?);
            }
        }
        out.insert(
            rel.name.clone(),
            PlainTable {
                relation: rel.name.clone(),
                tids,
                columns: header[1..].iter().cloned().zip(cols).collect(),
            },
        );
    }
    Ok(out)
}

fn parse_tid(s: &str, path: &Path) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("{}: bad tuple id {s:?}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    placement: String,
}

const MANIFEST: &str = "placement.json";

/// Writes `public/` and `private/` fragment files under `dir`. Encrypted
/// columns are written as an etuple field plus an `<attr>_id` field.
pub fn write_fragments(stores: &Stores, dir: &Path) -> Result<()> {
    for (cloud, store) in [(Cloud::Public, &stores.public), (Cloud::Private, &stores.private)] {
        let sub = dir.join(cloud.to_string());
        if sub.exists() {
            fs::remove_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for t in store.tables.values() {
            let path = csv_path(&sub, &t.relation);
            let mut w = writer(&path)?;
            let mut header = vec![t.tuple_id.clone()];
            for (name, data) in &t.columns {
                header.push(name.clone());
                if matches!(data, ColumnData::Encrypted(_)) {
                    header.push(format!("{name}_id"));
                }
            }
            w.write_record(&header)?;
            for (i, tid) in t.tids.iter().enumerate() {
                let mut rec = vec![tid.to_string()];
                for (_, data) in &t.columns {
                    match data {
                        ColumnData::Plain(v) => rec.push(v[i].to_string()),
                        ColumnData::Encrypted(v) => {
                            rec.push(v[i].encode());
                            rec.push(v[i].partition_id.to_hex());
                        }
                        ColumnData::Decrypted(_) => {
                            return Err(Error::Execution("cannot persist decrypted column".into()))
                        }
                    }
                }
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    let manifest = StoreManifest {
        placement: stores.placement.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

/// Loads fragment files written by [`write_fragments`] and checks them
/// against the placed catalog: every expected fragment present with the
/// expected columns, and both fragments of a relation holding the same
/// tuple ids.
pub fn load_fragments(placed: &Catalog, dir: &Path) -> Result<Stores> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: StoreManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
    )?;
    let mut stores = Stores {
        public: Store::default(),
        private: Store::default(),
        placement: manifest.placement,
    };
    for rel in placed.relations() {
        let mut tid_sets: Vec<(Cloud, BTreeSet<u64>)> = Vec::new();
        for cloud in [Cloud::Public, Cloud::Private] {
            let attrs: Vec<_> = placed
                .attributes_of(&rel.name)
                .filter(|a| a.placement == cloud)
                .collect();
            if attrs.is_empty() {
                continue;
            }
            let path = csv_path(&dir.join(cloud.to_string()), &rel.name);
            let mut r = reader(&path)?;
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            let mut expected = vec![rel.tuple_id.clone()];
            for a in &attrs {
                expected.push(a.name.clone());
                if a.is_encrypted() {
                    expected.push(format!("{}_id", a.name));
                }
            }
            if header != expected {
                return Err(Error::Execution(format!(
                    "{}: header {header:?} does not match placement (expected {expected:?})",
                    path.display()
                )));
            }
            let mut tids = Vec::new();
            let mut cols: Vec<ColumnData> = attrs
                .iter()
                .map(|a| {
                    if a.is_encrypted() {
                        ColumnData::Encrypted(Vec::new())
                    } else {
                        ColumnData::Plain(Vec::new())
                    }
                })
                .collect();
            for rec in r.records() {
                let rec = rec?;
                tids.push(parse_tid(&rec[0], &path)?);
                let mut field = 1;
                for (a, col) in attrs.iter().zip(cols.iter_mut()) {
                    match col {
                        ColumnData::Plain(v) => {
                            v.push(Value::parse(a.datatype, &rec[field])?);
                            field += 1;
                        }
                        ColumnData::Encrypted(v) => {
                            v.push(ETuple::decode(&rec[field], &rec[field + 1])?);
                            field += 2;
                        }
                        ColumnData::Decrypted(_) => unreachable!(),
                    }
                }
            }
            let set: BTreeSet<u64> = tids.iter().copied().collect();
            if set.len() != tids.len() {
                return Err(Error::Execution(format!("{}: duplicate tuple ids", path.display())));
            }
            if let Some((other, prev)) = tid_sets.first() {
                if *prev != set {
                    return Err(Error::Execution(format!(
                        "{}: tuple ids differ from the {other} fragment ({} vs {} rows)",
                        path.display(),
                        set.len(),
                        prev.len()
                    )));
                }
            }
            tid_sets.push((cloud, set));
            let names = attrs.iter().map(|a| a.name.clone());
            let table = Table::new(rel.name.clone(), rel.tuple_id.clone(), tids, names.zip(cols).collect());
            let store = match cloud {
                Cloud::Public => &mut stores.public,
                Cloud::Private => &mut stores.private,
            };
            store.tables.insert(rel.name.clone(), Arc::new(table));
        }
    }
    Ok(stores)
}
