//! Meta-path guided attentive graph auto-encoder.
//!
//! Every non-nation node `v` is encoded once from the input feature vectors:
//! neighbours `N(v)` come from the meta-path of its level, anchored at its
//! parent; attention is the bilinear form `a_v^T R_r a_u` for the relation
//! `r` of the path's final hop, normalised with a softmax; the output is the
//! elementwise mean of `a_v` and the attention-weighted neighbour sum.

mod train;

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use train::{
    gae_loss, input_features, link_auc, sample_negatives, split_near_edges, train_gae, GaeConfig, RelationGrads, TrainedGae,
};

use crate::graph::{meta_path_neighbors, Ahin, Features, GraphError, MetaPath, NodeId, RelationType, FEATURE_DIM};
use crate::nn::sigmoid;

#[derive(Debug, thiserror::Error)]
pub enum GaeError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("node has no meta-path neighbours")]
    NoNeighbors,
    #[error("graph has no near edges to reconstruct")]
    NoEdges,
    #[error("graph needs at least two levels")]
    TooFewLevels,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Square `d x d` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl RelationMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        (0..dim).for_each(|i| data[i * dim + i] = 1.0);
        RelationMatrix { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        RelationMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self, GaeError> {
        if data.len() != dim * dim {
            return Err(GaeError::Dimension {
                expected: dim * dim,
                found: data.len(),
            });
        }
        Ok(RelationMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// One relation matrix per relation type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrices {
    pub include: RelationMatrix,
    pub near: RelationMatrix,
}

impl RelationMatrices {
    pub fn identity(dim: usize) -> Self {
        RelationMatrices {
            include: RelationMatrix::identity(dim),
            near: RelationMatrix::identity(dim),
        }
    }

    pub fn get(&self, relation: RelationType) -> &RelationMatrix {
        match relation {
            RelationType::Include => &self.include,
            RelationType::Near => &self.near,
        }
    }

    pub fn get_mut(&mut self, relation: RelationType) -> &mut RelationMatrix {
        match relation {
            RelationType::Include => &mut self.include,
            RelationType::Near => &mut self.near,
        }
    }
}

/// `a_v^T R a_u`.
pub fn attention_raw(a_v: &[f64], a_u: &[f64], r: &RelationMatrix) -> Result<f64, GaeError> {
    for len in [a_v.len(), a_u.len()] {
        if len != r.dim {
            return Err(GaeError::Dimension {
                expected: r.dim,
                found: len,
            });
        }
    }
    let d = r.dim;
    Ok((0..d)
        .map(|i| {
            let row = &r.data[i * d..(i + 1) * d];
            a_v[i] * row.iter().zip(a_u).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum())
}

/// Numerically stable softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

pub fn attention_normalized(
    a_v: &[f64],
    neighbors: &[&[f64]],
    r: &RelationMatrix,
) -> Result<AttentionWeights, GaeError> {
    if neighbors.is_empty() {
        return Err(GaeError::NoNeighbors);
    }
    let raw = neighbors
        .iter()
        .map(|a_u| attention_raw(a_v, a_u, r))
        .collect::<Result<Vec<_>, _>>()?;
    let normalized = softmax(&raw);
    Ok(AttentionWeights { raw, normalized })
}

/// `sum_u w_u a_u`.
pub fn aggregate_neighbors(neighbors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, GaeError> {
    if neighbors.len() != weights.len() {
        return Err(GaeError::Dimension {
            expected: neighbors.len(),
            found: weights.len(),
        });
    }
    let dim = neighbors.first().map_or(0, |a| a.len());
    let mut out = vec![0.0; dim];
    for (a_u, w) in neighbors.iter().zip(weights) {
        if a_u.len() != dim {
            return Err(GaeError::Dimension {
                expected: dim,
                found: a_u.len(),
            });
        }
        out.iter_mut().zip(a_u.iter()).for_each(|(o, x)| *o += w * x);
    }
    Ok(out)
}

/// Elementwise mean of a node's vector and its neighbour aggregate.
pub fn combine(a_v: &[f64], a_n: &[f64]) -> Vec<f64> {
    a_v.iter().zip(a_n).map(|(x, y)| (x + y) * 0.5).collect()
}

/// `sigmoid(a_v . a_u)`.
pub fn decode_link(a_v: &[f64], a_u: &[f64]) -> f64 {
    sigmoid(a_v.iter().zip(a_u).map(|(x, y)| x * y).sum())
}

/// Meta-path neighbours of every node. A node at level `l` uses the built-in
/// path starting one level above `l`, walked from its own parent, minus
/// itself. The nation has no path and keeps its input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    neighbors: Vec<Vec<NodeId>>,
    relation: Vec<Option<RelationType>>,
}

impl NeighborIndex {
    pub fn build(ahin: &Ahin) -> Result<Self, GaeError> {
        let mut neighbors = vec![Vec::new(); ahin.len()];
        let mut relation = vec![None; ahin.len()];
        let mut by_anchor: HashMap<NodeId, (Vec<NodeId>, RelationType)> = HashMap::new();
        for v in ahin.node_ids() {
            let level = ahin.node(v).level;
            let (Some(path), Some(anchor)) = (MetaPath::for_level(level), ahin.parent(v)) else {
                continue;
            };
            let (nodes, rel) = match by_anchor.entry(anchor) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let found = meta_path_neighbors(ahin, anchor, &path)?;
                    e.insert((found.nodes, found.relation))
                }
            };
            neighbors[v.index()] = nodes.iter().copied().filter(|&u| u != v).collect();
            relation[v.index()] = Some(*rel);
        }
        Ok(NeighborIndex { neighbors, relation })
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[v.index()]
    }

    pub fn relation(&self, v: NodeId) -> Option<RelationType> {
        self.relation[v.index()]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Encoding of one node together with the attention it used.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEncoding {
    pub vector: Features,
    pub neighbors: Vec<NodeId>,
    pub weights: Vec<f64>,
    pub relation: Option<RelationType>,
}

/// Encodes `v` from `inputs`, indexed by node.
pub fn encode_node(v: NodeId, inputs: &[Features], index: &NeighborIndex, relations: &RelationMatrices) -> NodeEncoding {
    encode_node_with(v, index, relations, |u| inputs[u.index()])
}

/// Encodes `v`, fetching input vectors on demand for `v` and its neighbours.
pub fn encode_node_with(
    v: NodeId,
    index: &NeighborIndex,
    relations: &RelationMatrices,
    features: impl Fn(NodeId) -> Features,
) -> NodeEncoding {
    let a_v = features(v);
    let neighbors = index.neighbors(v);
    let Some(relation) = index.relation(v).filter(|_| !neighbors.is_empty()) else {
        return NodeEncoding {
            vector: a_v,
            neighbors: Vec::new(),
            weights: Vec::new(),
            relation: index.relation(v),
        };
    };
    let fetched: Vec<Features> = neighbors.iter().map(|&u| features(u)).collect();
    let rows: Vec<&[f64]> = fetched.iter().map(|f| f.as_slice()).collect();
    let attention = attention_normalized(&a_v, &rows, relations.get(relation)).expect("feature dimension is fixed");
    let a_n = aggregate_neighbors(&rows, &attention.normalized).expect("weights match neighbours");
    let mut vector = [0.0; FEATURE_DIM];
    vector.copy_from_slice(&combine(&a_v, &a_n));
    NodeEncoding {
        vector,
        neighbors: neighbors.to_vec(),
        weights: attention.normalized,
        relation: Some(relation),
    }
}

/// Encodes every node.
pub fn encode(inputs: &[Features], index: &NeighborIndex, relations: &RelationMatrices) -> Vec<Features> {
    (0..inputs.len())
        .into_par_iter()
        .map(|i| encode_node(NodeId(i as u32), inputs, index, relations).vector)
        .collect()
}
