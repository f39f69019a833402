//! Dataset ingest: rating logs plus item attribute pair files, converted to
//! implicit feedback and organized as a heterogeneous graph.
//!
//! File contract (whitespace separated, one record per line):
//!
//! * ratings: `user_id item_id rating timestamp`
//! * attributes: `item_id attribute_id`, one file per relation
//!
//! Raw ids are arbitrary tokens; dense indices follow the sorted raw ids
//! (numerically when both ids are integers).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::Interaction;
use crate::hin::{build_graph, HinGraph, NodeType, Schema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Movielens,
    Amazon,
}

impl Flavor {
    pub fn item_type(self) -> NodeType {
        match self {
            Flavor::Movielens => 'M',
            Flavor::Amazon => 'I',
        }
    }

    pub fn interaction_label(self) -> String {
        format!("U{}", self.item_type())
    }

    pub fn base_schema(self) -> Schema {
        match self {
            Flavor::Movielens => Schema::movielens(),
            Flavor::Amazon => Schema::amazon(),
        }
    }

    /// Base schema extended with any attribute relation it does not already
    /// declare. Labels are two letters: item type, then attribute type.
    pub fn schema_with<'a>(self, labels: impl IntoIterator<Item = &'a str>) -> Result<Schema> {
        let base = self.base_schema();
        let mut node_types: Vec<NodeType> = base.node_types().collect();
        let mut relations: Vec<(String, NodeType, NodeType)> = base
            .relations()
            .iter()
            .map(|r| (r.label.clone(), r.source, r.target))
            .collect();
        for label in labels {
            let (source, target) = self.parse_attribute_label(label)?;
            if base.relation(label).is_some() {
                continue;
            }
            if target == 'U' || target == self.item_type() {
                return Err(Error::Schema(format!(
                    "attribute relation `{label}` must point to a new node type"
                )));
            }
            if !node_types.contains(&target) {
                node_types.push(target);
            }
            relations.push((label.to_string(), source, target));
        }
        Schema::new(node_types, relations)
    }

    fn parse_attribute_label(self, label: &str) -> Result<(NodeType, NodeType)> {
        let chars: Vec<char> = label.chars().collect();
        match chars.as_slice() {
            [s, t] if *s == self.item_type() && t.is_ascii_uppercase() => Ok((*s, *t)),
            _ => Err(Error::Schema(format!(
                "attribute relation `{label}` does not match the {self} schema (expected `{}X`)",
                self.item_type()
            ))),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Movielens => "movielens",
            Flavor::Amazon => "amazon",
        })
    }
}

/// Bijective raw id <-> dense index dictionary for one node type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

fn raw_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

impl IdMap {
    pub fn from_raw<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut raw: Vec<String> = ids.into_iter().map(Into::into).collect();
        raw.sort_by(|a, b| raw_order(a, b));
        raw.dedup();
        raw.into()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: usize) -> &str {
        &self.raw[index]
    }
}

impl From<Vec<String>> for IdMap {
    fn from(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(k, r)| (r.clone(), k))
            .collect();
        IdMap { raw, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(m: IdMap) -> Self {
        m.raw
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub flavor: Flavor,
    pub ratings: Vec<Rating>,
    /// Relation label -> (item index, attribute index) pairs.
    pub attribute_edges: BTreeMap<String, Vec<(usize, usize)>>,
    pub id_maps: BTreeMap<NodeType, IdMap>,
}

impl RawDataset {
    pub fn n_users(&self) -> usize {
        self.id_maps.get(&'U').map_or(0, IdMap::len)
    }

    pub fn n_items(&self) -> usize {
        self.id_maps
            .get(&self.flavor.item_type())
            .map_or(0, IdMap::len)
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.len()
    }

    pub fn density(&self) -> f64 {
        self.n_ratings() as f64 / (self.n_users() as f64 * self.n_items() as f64)
    }

    pub fn schema(&self) -> Result<Schema> {
        self.flavor
            .schema_with(self.attribute_edges.keys().map(String::as_str))
    }
}

struct RawRating {
    user: String,
    item: String,
    rating: f64,
    timestamp: u64,
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

fn parse_ratings(path: &Path) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [user, item, rating, timestamp] = fields.as_slice() else {
            return Err(err(format!(
                "expected `user item rating timestamp`, got {} fields",
                fields.len()
            )));
        };
        let rating: f64 = rating
            .parse()
            .map_err(|_| err(format!("bad rating `{rating}`")))?;
        let timestamp: u64 = timestamp
            .parse()
            .map_err(|_| err(format!("bad timestamp `{timestamp}`")))?;
        out.push(RawRating {
            user: user.to_string(),
            item: item.to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

fn parse_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = fields.as_slice() else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                reason: format!(
                    "expected `item_id attribute_id`, got {} fields",
                    fields.len()
                ),
            });
        };
        out.push((a.to_string(), b.to_string()));
    }
    Ok(out)
}

/// Loads a rating log plus attribute files. Users with fewer than
/// `min_user_items` distinct items are dropped, as are items left without
/// ratings afterwards.
pub fn load_dataset(
    flavor: Flavor,
    ratings_path: &Path,
    attribute_paths: &BTreeMap<String, PathBuf>,
    min_user_items: usize,
) -> Result<RawDataset> {
    let schema = flavor.schema_with(attribute_paths.keys().map(String::as_str))?;
    let mut raw = parse_ratings(ratings_path)?;

    if min_user_items > 1 {
        let mut per_user: HashMap<&str, std::collections::HashSet<&str>> = HashMap::new();
        for r in &raw {
            per_user.entry(&r.user).or_default().insert(&r.item);
        }
        let keep: std::collections::HashSet<String> = per_user
            .into_iter()
            .filter(|(_, items)| items.len() >= min_user_items)
            .map(|(u, _)| u.to_string())
            .collect();
        let before = raw.len();
        raw.retain(|r| keep.contains(&r.user));
        log::info!(
            "kept {} of {before} ratings after dropping users with fewer than {min_user_items} items",
            raw.len()
        );
    }

    let users = IdMap::from_raw(raw.iter().map(|r| r.user.as_str()));
    let items = IdMap::from_raw(raw.iter().map(|r| r.item.as_str()));
    let ratings = raw
        .iter()
        .map(|r| Rating {
            user: users.get(&r.user).expect("user in map"),
            item: items.get(&r.item).expect("item in map"),
            rating: r.rating,
            timestamp: r.timestamp,
        })
        .collect();

    let mut id_maps = BTreeMap::new();
    let mut attribute_edges = BTreeMap::new();
    for (label, path) in attribute_paths {
        let target = schema
            .relation(label)
            .expect("schema built from these labels")
            .target;
        let pairs = parse_pairs(path)?;
        if pairs.is_empty() {
            log::warn!("attribute file {} for `{label}` is empty", path.display());
        }
        let (known, unknown): (Vec<_>, Vec<_>) = pairs
            .into_iter()
            .partition(|(item, _)| items.get(item).is_some());
        if !unknown.is_empty() {
            log::warn!(
                "{}: skipped {} pairs naming items without ratings",
                path.display(),
                unknown.len()
            );
        }
        let attrs = IdMap::from_raw(known.iter().map(|(_, a)| a.as_str()));
        let edges = known
            .iter()
            .map(|(i, a)| (items.get(i).unwrap(), attrs.get(a).unwrap()))
            .collect();
        attribute_edges.insert(label.clone(), edges);
        if id_maps.insert(target, attrs).is_some() {
            return Err(Error::Schema(format!(
                "node type `{target}` is fed by more than one attribute file"
            )));
        }
    }
    id_maps.insert('U', users);
    id_maps.insert(flavor.item_type(), items);
    Ok(RawDataset {
        flavor,
        ratings,
        attribute_edges,
        id_maps,
    })
}

/// MovieLens: `UM` ratings with director (`MD`) and actor (`MA`) pair files.
pub fn load_movielens(
    ratings_path: &Path,
    attribute_paths: &BTreeMap<String, PathBuf>,
) -> Result<RawDataset> {
    load_dataset(Flavor::Movielens, ratings_path, attribute_paths, 0)
}

/// Amazon: `UI` purchases with brand, category and co-view pair files;
/// users with fewer than ten items are removed.
pub fn load_amazon(
    ratings_path: &Path,
    attribute_paths: &BTreeMap<String, PathBuf>,
) -> Result<RawDataset> {
    load_dataset(Flavor::Amazon, ratings_path, attribute_paths, 10)
}

/// Every rated pair becomes one positive; repeats keep the latest timestamp.
pub fn to_implicit(raw: &RawDataset) -> Vec<Interaction> {
    let mut latest: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for r in &raw.ratings {
        let t = latest.entry((r.user, r.item)).or_insert(r.timestamp);
        *t = (*t).max(r.timestamp);
    }
    latest
        .into_iter()
        .map(|((user, item), timestamp)| Interaction {
            user,
            item,
            timestamp,
        })
        .collect()
}

/// Builds the graph: the user-item relation from `train` only, attribute
/// relations from the attribute files.
pub fn build_hin(raw: &RawDataset, schema: &Schema, train: &[Interaction]) -> Result<HinGraph> {
    let interaction = raw.flavor.interaction_label();
    let mismatch = |what: String| {
        Error::Schema(format!(
            "schema does not fit the {} dataset: {what}",
            raw.flavor
        ))
    };
    match schema.relation(&interaction) {
        Some(r) if r.source == 'U' && r.target == raw.flavor.item_type() => {}
        _ => return Err(mismatch(format!("missing relation `{interaction}`"))),
    }
    for label in raw.attribute_edges.keys() {
        match schema.relation(label) {
            Some(r) if r.source == raw.flavor.item_type() => {}
            _ => return Err(mismatch(format!("no item relation `{label}`"))),
        }
    }
    let mut counts: HashMap<NodeType, usize> = schema.node_types().map(|t| (t, 0)).collect();
    for (t, map) in &raw.id_maps {
        if !schema.has_node_type(*t) {
            return Err(mismatch(format!("node type `{t}` not in schema")));
        }
        counts.insert(*t, map.len());
    }
    let mut edges = raw.attribute_edges.clone();
    edges.insert(
        interaction,
        train.iter().map(|it| (it.user, it.item)).collect(),
    );
    build_graph(schema.clone(), &counts, &edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn checksum_file(path: &Path) -> Result<FileChecksum> {
    let mut reader = open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = reader
            .read(&mut buf)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(FileChecksum {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Counts and checksums for reproducibility audits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub flavor: Flavor,
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub density: f64,
    pub node_counts: BTreeMap<NodeType, usize>,
    pub attribute_edges: BTreeMap<String, usize>,
    pub files: Vec<FileChecksum>,
}

impl DatasetManifest {
    pub fn build(raw: &RawDataset, files: &[&Path]) -> Result<Self> {
        Ok(DatasetManifest {
            flavor: raw.flavor,
            n_users: raw.n_users(),
            n_items: raw.n_items(),
            n_ratings: raw.n_ratings(),
            density: raw.density(),
            node_counts: raw.id_maps.iter().map(|(t, m)| (*t, m.len())).collect(),
            attribute_edges: raw
                .attribute_edges
                .iter()
                .map(|(l, e)| (l.clone(), e.len()))
                .collect(),
            files: files
                .iter()
                .map(|p| checksum_file(p))
                .collect::<Result<_>>()?,
        })
    }
}
