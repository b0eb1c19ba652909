//! Scene graph: objects with their placements, and directed relation edges
//! (reference → movable) labelled strong or weak.
//!
//! The store is single-writer: every mutation takes `&mut self` and bumps the
//! revision counter. Readers either borrow it immutably or work on a clone or
//! a [`SceneDocument`] snapshot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{validate_distance, Constraint, ConstraintError, ConstraintKind, GapMode};
use crate::geometry::{Aabb, Block, ObjectId, ObjectInstance, Vec3};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate object: {0}")]
    DuplicateObject(ObjectId),
    #[error("unknown object: {0}")]
    UnknownObject(ObjectId),
    #[error("self relation on object {0}")]
    SelfRelation(ObjectId),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("unplaced object has no strong reference: {0}")]
    NoStrongReference(ObjectId),
    #[error("budget violation: {reference} supplies {count} {strength} constraints to {movable} (allowed {min}..={max})")]
    Budget {
        movable: ObjectId,
        reference: ObjectId,
        strength: Strength,
        count: usize,
        min: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("malformed scene document at `{path}` (line {line}, column {column}): {message}")]
    Syntax { path: String, line: usize, column: usize, message: String },
    #[error("invalid scene document at `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl DocumentError {
    fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        DocumentError::Invalid { field: field.into(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
}

impl std::fmt::Display for Strength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strength::Strong => "strong",
            Strength::Weak => "weak",
        })
    }
}

/// Strong references supply `strong_min..=strong_max` constraints; each weak
/// reference at most `weak_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintBudget {
    pub strong_min: usize,
    pub strong_max: usize,
    pub weak_min: usize,
    pub weak_max: usize,
}

impl Default for ConstraintBudget {
    fn default() -> Self {
        Self { strong_min: 1, strong_max: 3, weak_min: 0, weak_max: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub object: ObjectInstance,
    pub tags: Vec<String>,
    pub created_by: String,
}

impl SceneNode {
    pub fn new(object: ObjectInstance, created_by: impl Into<String>) -> Self {
        Self { object, tags: Vec::new(), created_by: created_by.into() }
    }

    pub fn with_tags(mut self, tags: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn id(&self) -> &ObjectId {
        self.object.id()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub from: ObjectId,
    pub to: ObjectId,
    pub kind: ConstraintKind,
    #[serde(default)]
    pub distance: f64,
    pub strength: Strength,
    #[serde(default, skip_serializing_if = "GapMode::is_exact")]
    pub gap: GapMode,
}

impl RelationEdge {
    pub fn new(from: impl Into<ObjectId>, to: impl Into<ObjectId>, kind: ConstraintKind, distance: f64, strength: Strength) -> Self {
        Self { from: from.into(), to: to.into(), kind, distance, strength, gap: GapMode::Exact }
    }

    pub fn constraint(&self) -> Constraint {
        Constraint {
            kind: self.kind,
            reference: self.from.clone(),
            movable: self.to.clone(),
            distance: self.distance,
            gap: self.gap,
        }
    }

    fn key(&self) -> EdgeKey {
        (self.from.clone(), self.to.clone(), self.kind)
    }
}

type EdgeKey = (ObjectId, ObjectId, ConstraintKind);

#[derive(Debug, Clone, PartialEq)]
struct NodeEntry {
    node: SceneNode,
    order: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGraph {
    nodes: BTreeMap<ObjectId, NodeEntry>,
    edges: BTreeMap<EdgeKey, RelationEdge>,
    revision: u64,
    next_order: u64,
}

impl SceneGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.nodes.get(id).map(|e| &e.node)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.node(id).map(|n| &n.object)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().map(|e| &e.node)
    }

    /// Creation sequence number of a node; lower means added earlier.
    pub fn creation_order(&self, id: &str) -> Option<u64> {
        self.nodes.get(id).map(|e| e.order)
    }

    /// Edges in `(from, to, kind)` order.
    pub fn edges(&self) -> impl Iterator<Item = &RelationEdge> {
        self.edges.values()
    }

    pub fn bounds_map(&self) -> BTreeMap<ObjectId, Aabb> {
        self.nodes.iter().map(|(id, e)| (id.clone(), e.node.object.bounds())).collect()
    }

    pub fn add_object(&mut self, node: SceneNode) -> Result<u64, GraphError> {
        let id = node.id().clone();
        if self.nodes.contains_key(&id) {
            return Err(GraphError::DuplicateObject(id));
        }
        let order = self.next_order;
        self.next_order += 1;
        self.nodes.insert(id, NodeEntry { node, order });
        Ok(self.bump())
    }

    /// Insert or replace the edge keyed by `(from, to, kind)`.
    pub fn add_relation(&mut self, edge: RelationEdge) -> Result<u64, GraphError> {
        for end in [&edge.from, &edge.to] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::UnknownObject(end.clone()));
            }
        }
        if edge.from == edge.to {
            return Err(GraphError::SelfRelation(edge.from));
        }
        validate_distance(edge.kind, edge.distance)?;
        self.edges.insert(edge.key(), edge);
        Ok(self.bump())
    }

    pub fn update_placement(&mut self, id: &str, translation: Vec3) -> Result<u64, GraphError> {
        let entry = self.nodes.get_mut(id).ok_or_else(|| GraphError::UnknownObject(id.into()))?;
        entry.node.object = entry.node.object.translated(translation);
        Ok(self.bump())
    }

    fn bump(&mut self) -> u64 {
        self.revision += 1;
        self.revision
    }

    fn incoming(&self, movable: &str, strength: Strength) -> BTreeMap<&ObjectId, Vec<&RelationEdge>> {
        let mut groups: BTreeMap<&ObjectId, Vec<&RelationEdge>> = BTreeMap::new();
        for e in self.edges.values() {
            if e.to.as_str() == movable && e.strength == strength {
                groups.entry(&e.from).or_default().push(e);
            }
        }
        groups
    }

    /// Objects sharing any edge with `id`, in either direction.
    pub fn neighbors(&self, id: &str) -> BTreeSet<&ObjectId> {
        self.edges
            .values()
            .filter_map(|e| {
                if e.from.as_str() == id {
                    Some(&e.to)
                } else if e.to.as_str() == id {
                    Some(&e.from)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn strong_reference(&self, movable: &str) -> Result<(ObjectId, Vec<Constraint>), GraphError> {
        self.strong_reference_with(movable, &ConstraintBudget::default())
    }

    /// The single strong reference of `movable`: the candidate supplying the
    /// most strong constraints, then the earliest created, then the smallest id.
    pub fn strong_reference_with(
        &self,
        movable: &str,
        budget: &ConstraintBudget,
    ) -> Result<(ObjectId, Vec<Constraint>), GraphError> {
        if !self.contains(movable) {
            return Err(GraphError::UnknownObject(movable.into()));
        }
        let groups = self.incoming(movable, Strength::Strong);
        let (reference, edges) = groups
            .into_iter()
            .min_by_key(|(id, edges)| (std::cmp::Reverse(edges.len()), self.nodes[*id].order, (*id).clone()))
            .ok_or_else(|| GraphError::NoStrongReference(movable.into()))?;
        let count = edges.len();
        if count < budget.strong_min || count > budget.strong_max {
            return Err(GraphError::Budget {
                movable: movable.into(),
                reference: reference.clone(),
                strength: Strength::Strong,
                count,
                min: budget.strong_min,
                max: budget.strong_max,
            });
        }
        Ok((reference.clone(), edges.into_iter().map(RelationEdge::constraint).collect()))
    }

    pub fn weak_references(&self, strong_ref: &str, movable: &str) -> Result<Vec<(ObjectId, Vec<Constraint>)>, GraphError> {
        self.weak_references_with(strong_ref, movable, &ConstraintBudget::default())
    }

    /// Weak references of `movable` that are graph neighbors of `strong_ref`,
    /// each trimmed to `weak_max` constraints by [`ConstraintKind::trim_priority`].
    pub fn weak_references_with(
        &self,
        strong_ref: &str,
        movable: &str,
        budget: &ConstraintBudget,
    ) -> Result<Vec<(ObjectId, Vec<Constraint>)>, GraphError> {
        if !self.contains(strong_ref) {
            return Err(GraphError::UnknownObject(strong_ref.into()));
        }
        let neighbors = self.neighbors(strong_ref);
        let mut out = Vec::new();
        for (reference, mut edges) in self.incoming(movable, Strength::Weak) {
            if reference.as_str() == strong_ref || !neighbors.contains(reference) {
                continue;
            }
            edges.sort_by_key(|e| (e.kind.trim_priority(), e.kind));
            edges.truncate(budget.weak_max);
            if edges.len() < budget.weak_min {
                return Err(GraphError::Budget {
                    movable: movable.into(),
                    reference: reference.clone(),
                    strength: Strength::Weak,
                    count: edges.len(),
                    min: budget.weak_min,
                    max: budget.weak_max,
                });
            }
            out.push((reference.clone(), edges.into_iter().map(RelationEdge::constraint).collect()));
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> SceneDocument {
        let nodes = self
            .nodes
            .values()
            .map(|e| NodeDoc {
                id: e.node.object.id().clone(),
                name: e.node.object.name().to_owned(),
                tags: e.node.tags.clone(),
                created_by: e.node.created_by.clone(),
                order: Some(e.order),
                blocks: e.node.object.blocks().to_vec(),
            })
            .collect();
        SceneDocument { version: DOCUMENT_VERSION, nodes, edges: self.edges.values().cloned().collect() }
    }

    /// Canonical JSON text of [`snapshot`](Self::snapshot).
    pub fn to_json(&self) -> String {
        self.snapshot().to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        SceneDocument::from_json(text)?.into_graph()
    }

    pub fn from_document(doc: &SceneDocument) -> Result<Self, DocumentError> {
        doc.clone().into_graph()
    }
}

/// On-disk scene representation. Nodes are sorted by id and edges by
/// `(from, to, kind)`; numbers are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub version: u32,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<RelationEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: ObjectId,
    pub name: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub created_by: String,
    /// Creation sequence; defaults to the array position when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u64>,
    pub blocks: Vec<Block>,
}

impl SceneDocument {
    pub fn empty() -> Self {
        Self { version: DOCUMENT_VERSION, nodes: Vec::new(), edges: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scene documents always serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            DocumentError::Syntax { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
        })
    }

    pub fn into_graph(self) -> Result<SceneGraph, DocumentError> {
        if self.version != DOCUMENT_VERSION {
            return Err(DocumentError::invalid("version", format!("unsupported version {}, expected {DOCUMENT_VERSION}", self.version)));
        }
        let mut graph = SceneGraph::new();
        let mut orders = BTreeSet::new();
        for (i, node) in self.nodes.into_iter().enumerate() {
            let order = node.order.unwrap_or(i as u64);
            if !orders.insert(order) {
                return Err(DocumentError::invalid(format!("nodes[{i}].order"), format!("duplicate order {order}")));
            }
            let object = ObjectInstance::new(node.id, node.name, node.blocks)
                .map_err(|e| DocumentError::invalid(format!("nodes[{i}].blocks"), e))?;
            let id = object.id().clone();
            if graph.nodes.contains_key(&id) {
                return Err(DocumentError::invalid(format!("nodes[{i}].id"), format!("duplicate object: {id}")));
            }
            graph.next_order = graph.next_order.max(order + 1);
            let node = SceneNode { object, tags: node.tags, created_by: node.created_by };
            graph.nodes.insert(id, NodeEntry { node, order });
        }
        for (i, edge) in self.edges.into_iter().enumerate() {
            for (end, field) in [(&edge.from, "from"), (&edge.to, "to")] {
                if !graph.nodes.contains_key(end) {
                    return Err(DocumentError::invalid(format!("edges[{i}].{field}"), format!("unknown object: {end}")));
                }
            }
            if edge.from == edge.to {
                return Err(DocumentError::invalid(format!("edges[{i}]"), format!("self relation on object {}", edge.from)));
            }
            validate_distance(edge.kind, edge.distance).map_err(|e| DocumentError::invalid(format!("edges[{i}].distance"), e))?;
            if graph.edges.insert(edge.key(), edge).is_some() {
                return Err(DocumentError::invalid(format!("edges[{i}]"), "duplicate (from, to, kind) edge"));
            }
        }
        Ok(graph)
    }
}
