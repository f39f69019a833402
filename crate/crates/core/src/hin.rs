//! Typed heterogeneous graph: node types, typed binary relations, and one
//! sparse adjacency matrix per relation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Node type label. Meta-path expressions spell node types one letter each.
pub type NodeType = char;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub label: String,
    pub source: NodeType,
    pub target: NodeType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    node_types: BTreeSet<NodeType>,
    relations: Vec<RelationDef>,
}

impl Schema {
    pub fn new(
        node_types: impl IntoIterator<Item = NodeType>,
        relations: impl IntoIterator<Item = (String, NodeType, NodeType)>,
    ) -> Result<Self> {
        let node_types: BTreeSet<NodeType> = node_types.into_iter().collect();
        if let Some(t) = node_types.iter().find(|t| !t.is_ascii_alphabetic()) {
            return Err(Error::Schema(format!("node type `{t}` is not a letter")));
        }
        let mut defs = Vec::new();
        let mut seen = BTreeSet::new();
        for (label, source, target) in relations {
            if !seen.insert(label.clone()) {
                return Err(Error::Schema(format!("duplicate relation label `{label}`")));
            }
            for t in [source, target] {
                if !node_types.contains(&t) {
                    return Err(Error::Schema(format!(
                        "relation `{label}` references undeclared node type `{t}`"
                    )));
                }
            }
            defs.push(RelationDef {
                label,
                source,
                target,
            });
        }
        Ok(Schema {
            node_types,
            relations: defs,
        })
    }

    /// User, movie, director, actor.
    pub fn movielens() -> Self {
        Self::new(
            ['U', 'M', 'D', 'A'],
            [
                ("UM".to_string(), 'U', 'M'),
                ("MD".to_string(), 'M', 'D'),
                ("MA".to_string(), 'M', 'A'),
            ],
        )
        .expect("static schema")
    }

    /// User, item, brand, category, co-view.
    pub fn amazon() -> Self {
        Self::new(
            ['U', 'I', 'B', 'C', 'V'],
            [
                ("UI".to_string(), 'U', 'I'),
                ("IB".to_string(), 'I', 'B'),
                ("IC".to_string(), 'I', 'C'),
                ("IV".to_string(), 'I', 'V'),
            ],
        )
        .expect("static schema")
    }

    pub fn node_types(&self) -> impl Iterator<Item = NodeType> + '_ {
        self.node_types.iter().copied()
    }

    pub fn has_node_type(&self, t: NodeType) -> bool {
        self.node_types.contains(&t)
    }

    pub fn relations(&self) -> &[RelationDef] {
        &self.relations
    }

    pub fn relation(&self, label: &str) -> Option<&RelationDef> {
        self.relations.iter().find(|r| r.label == label)
    }

    /// Relations connecting `a` and `b` in either direction, with the
    /// transposition flag needed to walk from `a` to `b`.
    pub fn relations_between(&self, a: NodeType, b: NodeType) -> Vec<(&RelationDef, bool)> {
        let mut out = Vec::new();
        for r in &self.relations {
            if r.source == a && r.target == b {
                out.push((r, false));
            } else if r.source == b && r.target == a {
                out.push((r, true));
            }
        }
        out
    }
}

/// Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HinGraph {
    schema: Schema,
    node_counts: BTreeMap<NodeType, usize>,
    relations: BTreeMap<String, SparseMatrix>,
}

/// Builds a graph whose relation matrices hold exactly the deduplicated
/// edges as 1-entries. Relations absent from `edge_lists` are all-zero.
pub fn build_graph(
    schema: Schema,
    node_counts: &HashMap<NodeType, usize>,
    edge_lists: &BTreeMap<String, Vec<(usize, usize)>>,
) -> Result<HinGraph> {
    let mut counts = BTreeMap::new();
    for t in schema.node_types() {
        let n = node_counts
            .get(&t)
            .copied()
            .ok_or_else(|| Error::Schema(format!("no node count for type `{t}`")))?;
        counts.insert(t, n);
    }
    if let Some(label) = edge_lists.keys().find(|l| schema.relation(l).is_none()) {
        return Err(Error::UnknownLabel(label.clone()));
    }

    let mut relations = BTreeMap::new();
    for def in schema.relations() {
        let n_rows = counts[&def.source];
        let n_cols = counts[&def.target];
        let edges = edge_lists.get(&def.label).map(Vec::as_slice).unwrap_or(&[]);
        let mut unique: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(s, t) in edges {
            if s >= n_rows || t >= n_cols {
                return Err(Error::OutOfRangeEdge {
                    relation: def.label.clone(),
                    source_index: s,
                    target_index: t,
                    n_rows,
                    n_cols,
                });
            }
            unique.push((s, t));
        }
        unique.sort_unstable();
        unique.dedup();
        let triplets = unique.into_iter().map(|(s, t)| (s, t, 1.0)).collect();
        relations.insert(
            def.label.clone(),
            SparseMatrix::from_triplets(n_rows, n_cols, triplets)?,
        );
    }
    Ok(HinGraph {
        schema,
        node_counts: counts,
        relations,
    })
}

impl HinGraph {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node_count(&self, t: NodeType) -> Option<usize> {
        self.node_counts.get(&t).copied()
    }

    pub fn node_counts(&self) -> &BTreeMap<NodeType, usize> {
        &self.node_counts
    }

    /// The adjacency matrix for `label`, or its transpose for reversed steps.
    pub fn relation_matrix(&self, label: &str, transposed: bool) -> Result<SparseMatrix> {
        let m = self
            .relations
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        Ok(if transposed { m.transpose() } else { m.clone() })
    }

    pub(crate) fn relation_ref(&self, label: &str) -> Result<&SparseMatrix> {
        self.relations
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}
