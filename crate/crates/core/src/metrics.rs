//! Scene quality metrics: overlap score and isolation score.
//!
//! * overlap score: summed pairwise intersection volume between blocks of
//!   *different* objects, divided by the summed volume of all blocks. A region
//!   covered by three blocks counts once per overlapping pair.
//! * isolation score: fraction of blocks whose box, grown by `contact_epsilon`
//!   on every face, touches no other block (siblings in the same object count).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::{Aabb, ObjectId};
use crate::graph::SceneGraph;

pub const DEFAULT_CONTACT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no blocks: metrics need a non-empty scene")]
    NoBlocks,
}

/// One block of one object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub object: ObjectId,
    pub block: usize,
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.object, self.block)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub a: BlockRef,
    pub b: BlockRef,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub overlap_score: f64,
    pub isolation_score: f64,
    pub pairs: Vec<OverlapPair>,
    pub isolated: Vec<BlockRef>,
}

impl SceneMetrics {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("metrics always serialize");
        text.push('\n');
        text
    }
}

impl fmt::Display for SceneMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>10}", "metric", "value")?;
        writeln!(f, "{:<18} {:>10.6}", "overlap_score", self.overlap_score)?;
        writeln!(f, "{:<18} {:>10.6}", "isolation_score", self.isolation_score)?;
        if !self.pairs.is_empty() {
            writeln!(f, "\noverlapping pairs:")?;
            for p in &self.pairs {
                writeln!(f, "  {:<20} {:<20} {:>10.6}", p.a.to_string(), p.b.to_string(), p.volume)?;
            }
        }
        if !self.isolated.is_empty() {
            writeln!(f, "\nisolated blocks:")?;
            for b in &self.isolated {
                writeln!(f, "  {b}")?;
            }
        }
        Ok(())
    }
}

struct FlatBlock {
    id: BlockRef,
    object: usize,
    bounds: Aabb,
    volume: f64,
}

fn flatten(store: &SceneGraph) -> Result<Vec<FlatBlock>, MetricsError> {
    let mut out = Vec::new();
    for (object, node) in store.nodes().enumerate() {
        for (i, block) in node.object.blocks().iter().enumerate() {
            out.push(FlatBlock {
                id: BlockRef { object: node.id().clone(), block: i },
                object,
                bounds: block.aabb(),
                volume: block.volume(),
            });
        }
    }
    if out.is_empty() {
        return Err(MetricsError::NoBlocks);
    }
    Ok(out)
}

/// Undirected block adjacency under a contact tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGraph {
    pub blocks: Vec<BlockRef>,
    pub adjacency: Vec<Vec<usize>>,
}

impl ContactGraph {
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn isolated(&self) -> Vec<BlockRef> {
        (0..self.blocks.len()).filter(|&i| self.degree(i) == 0).map(|i| self.blocks[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetricsEngine {
    pub execution: Execution,
}

impl MetricsEngine {
    pub fn new(execution: Execution) -> Self {
        Self { execution }
    }

    fn overlap_pairs(&self, blocks: &[FlatBlock]) -> Vec<OverlapPair> {
        let rows = self.execution.map_range(blocks.len(), |i| {
            let a = &blocks[i];
            blocks[i + 1..]
                .iter()
                .filter(|b| b.object != a.object)
                .filter_map(|b| {
                    let volume = a.bounds.intersection_volume(&b.bounds);
                    (volume > 0.0).then(|| OverlapPair { a: a.id.clone(), b: b.id.clone(), volume })
                })
                .collect::<Vec<_>>()
        });
        rows.into_iter().flatten().collect()
    }

    pub fn overlap_score(&self, store: &SceneGraph) -> Result<f64, MetricsError> {
        let blocks = flatten(store)?;
        Ok(overlap_ratio(&blocks, &self.overlap_pairs(&blocks)))
    }

    pub fn contact_graph(&self, store: &SceneGraph, contact_epsilon: f64) -> Result<ContactGraph, MetricsError> {
        let blocks = flatten(store)?;
        let adjacency = self.execution.map_range(blocks.len(), |i| {
            let grown = blocks[i].bounds.expanded(contact_epsilon);
            (0..blocks.len()).filter(|&j| j != i && grown.intersects(&blocks[j].bounds)).collect()
        });
        Ok(ContactGraph { blocks: blocks.into_iter().map(|b| b.id).collect(), adjacency })
    }

    pub fn isolation_score(&self, store: &SceneGraph, contact_epsilon: f64) -> Result<f64, MetricsError> {
        let graph = self.contact_graph(store, contact_epsilon)?;
        Ok(graph.isolated().len() as f64 / graph.blocks.len() as f64)
    }

    pub fn compute(&self, store: &SceneGraph, contact_epsilon: f64) -> Result<SceneMetrics, MetricsError> {
        let blocks = flatten(store)?;
        let pairs = self.overlap_pairs(&blocks);
        let overlap_score = overlap_ratio(&blocks, &pairs);
        let graph = self.contact_graph(store, contact_epsilon)?;
        let isolated = graph.isolated();
        Ok(SceneMetrics {
            overlap_score,
            isolation_score: isolated.len() as f64 / graph.blocks.len() as f64,
            pairs,
            isolated,
        })
    }
}

fn overlap_ratio(blocks: &[FlatBlock], pairs: &[OverlapPair]) -> f64 {
    let total: f64 = blocks.iter().map(|b| b.volume).sum();
    let overlap: f64 = pairs.iter().map(|p| p.volume).sum();
    (overlap / total).clamp(0.0, 1.0)
}

pub fn overlap_score(store: &SceneGraph) -> Result<f64, MetricsError> {
    MetricsEngine::default().overlap_score(store)
}

pub fn isolation_score(store: &SceneGraph, contact_epsilon: f64) -> Result<f64, MetricsError> {
    MetricsEngine::default().isolation_score(store, contact_epsilon)
}

pub fn contact_graph(store: &SceneGraph, contact_epsilon: f64) -> Result<ContactGraph, MetricsError> {
    MetricsEngine::default().contact_graph(store, contact_epsilon)
}

pub fn scene_metrics(store: &SceneGraph, contact_epsilon: f64) -> Result<SceneMetrics, MetricsError> {
    MetricsEngine::default().compute(store, contact_epsilon)
}
