use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{encode, encode_node, GaeError, NeighborIndex, RelationMatrices, RelationMatrix};
use crate::geo::Level;
use crate::graph::{Ahin, Features, NodeId, RelationType, FEATURE_DIM};
use crate::nn::{bce_with_logit, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Standard deviation of the noise added to the identity at start.
    pub init_noise: f64,
    /// Date whose features are encoded; the latest ingested date by default.
    pub date: Option<NaiveDate>,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig {
            epochs: 200,
            lr: 1e-2,
            seed: 7,
            init_noise: 0.01,
            date: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedGae {
    pub relations: RelationMatrices,
    pub representations: Vec<Features>,
    pub losses: Vec<f64>,
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationGrads {
    pub include: Vec<f64>,
    pub near: Vec<f64>,
}

impl RelationGrads {
    pub fn zeros(dim: usize) -> Self {
        RelationGrads {
            include: vec![0.0; dim * dim],
            near: vec![0.0; dim * dim],
        }
    }

    fn get_mut(&mut self, relation: RelationType) -> &mut [f64] {
        match relation {
            RelationType::Include => &mut self.include,
            RelationType::Near => &mut self.near,
        }
    }
}

/// Mean binary cross-entropy of the decoder over labelled pairs, with the
/// gradient with respect to both relation matrices accumulated into `grad`.
pub fn gae_loss(
    inputs: &[Features],
    index: &NeighborIndex,
    relations: &RelationMatrices,
    positives: &[(NodeId, NodeId)],
    negatives: &[(NodeId, NodeId)],
    grad: Option<&mut RelationGrads>,
) -> f64 {
    let n = inputs.len();
    let mut encoded: Vec<Option<super::NodeEncoding>> = vec![None; n];
    for &(a, b) in positives.iter().chain(negatives) {
        for v in [a, b] {
            if encoded[v.index()].is_none() {
                encoded[v.index()] = Some(encode_node(v, inputs, index, relations));
            }
        }
    }
    let h = |v: NodeId| &encoded[v.index()].as_ref().expect("encoded above").vector;

    let count = (positives.len() + negatives.len()).max(1) as f64;
    let mut total = 0.0;
    let mut upstream = vec![[0.0; FEATURE_DIM]; n];
    let labelled = positives.iter().map(|&p| (p, 1.0)).chain(negatives.iter().map(|&p| (p, 0.0)));
    for ((a, b), y) in labelled {
        let (ha, hb) = (h(a), h(b));
        let score: f64 = ha.iter().zip(hb).map(|(x, y)| x * y).sum();
        let (loss, dscore) = bce_with_logit(score, y);
        total += loss;
        let d = dscore / count;
        for i in 0..FEATURE_DIM {
            upstream[a.index()][i] += d * hb[i];
            upstream[b.index()][i] += d * ha[i];
        }
    }

    if let Some(grad) = grad {
        let dim = FEATURE_DIM;
        for (v, g) in upstream.iter().enumerate() {
            let Some(enc) = &encoded[v] else { continue };
            let Some(relation) = enc.relation.filter(|_| !enc.neighbors.is_empty()) else {
                continue;
            };
            // h_v = (a_v + sum_u w_u a_u) / 2 with w = softmax(beta).
            let dw: Vec<f64> = enc
                .neighbors
                .iter()
                .map(|u| 0.5 * g.iter().zip(&inputs[u.index()]).map(|(x, y)| x * y).sum::<f64>())
                .collect();
            let mean_dw: f64 = enc.weights.iter().zip(&dw).map(|(w, d)| w * d).sum();
            let a_v = &inputs[v];
            let target = grad.get_mut(relation);
            for (k, u) in enc.neighbors.iter().enumerate() {
                let dbeta = enc.weights[k] * (dw[k] - mean_dw);
                if dbeta == 0.0 {
                    continue;
                }
                let a_u = &inputs[u.index()];
                for i in 0..dim {
                    let s = dbeta * a_v[i];
                    if s == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        target[i * dim + j] += s * a_u[j];
                    }
                }
            }
        }
    }
    total / count
}

/// Uniformly drawn same-level pairs without a near edge, one per positive.
pub fn sample_negatives<R: Rng>(ahin: &Ahin, positives: &[(NodeId, NodeId)], rng: &mut R) -> Vec<(NodeId, NodeId)> {
    const TRIES: usize = 64;
    let mut out = Vec::with_capacity(positives.len());
    for &(a, _) in positives {
        let peers = ahin.level_nodes(ahin.node(a).level);
        if peers.len() < 2 {
            continue;
        }
        for _ in 0..TRIES {
            let x = peers[rng.random_range(0..peers.len())];
            let y = peers[rng.random_range(0..peers.len())];
            if x != y && !ahin.has_near_edge(x, y) {
                out.push((x.min(y), x.max(y)));
                break;
            }
        }
    }
    out
}

/// Holds out a seeded random share of near edges, stratified by level: each
/// level gives up `round(fraction * its edge count)` edges. Returns the graph
/// without them and the removed edges.
pub fn split_near_edges(ahin: &Ahin, fraction: f64, seed: u64) -> (Ahin, Vec<(NodeId, NodeId)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut removed = Vec::new();
    for level in Level::ALL {
        let mut edges: Vec<(NodeId, NodeId)> = ahin
            .near_edges()
            .iter()
            .copied()
            .filter(|&(a, _)| ahin.node(a).level == level)
            .collect();
        edges.shuffle(&mut rng);
        let held = ((edges.len() as f64) * fraction).round() as usize;
        removed.extend_from_slice(&edges[..held.min(edges.len())]);
    }
    removed.sort();
    (ahin.without_near_edges(&removed), removed)
}

/// Area under the ROC curve: the probability a random positive outscores a
/// random negative, ties counting one half.
pub fn link_auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return f64::NAN;
    }
    let mut wins = 0.0;
    for p in positive {
        for n in negative {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (positive.len() * negative.len()) as f64
}

/// Normalised input vectors of every node on `date`; demographics only when
/// `date` is `None` or unknown.
pub fn input_features(ahin: &Ahin, date: Option<NaiveDate>) -> Vec<Features> {
    let date = date.unwrap_or(NaiveDate::MIN);
    ahin.node_ids().map(|v| ahin.normalized(v, date)).collect()
}

/// Learns both relation matrices by reconstructing near edges against
/// freshly sampled negatives each epoch, then encodes every node once.
pub fn train_gae(ahin: &Ahin, config: &GaeConfig) -> Result<TrainedGae, GaeError> {
    if ahin.len() < 2 {
        return Err(GaeError::TooFewLevels);
    }
    let positives = ahin.near_edges().to_vec();
    if positives.is_empty() {
        return Err(GaeError::NoEdges);
    }
    let date = config.date.or_else(|| ahin.latest_date());
    let inputs = input_features(ahin, date);
    let index = NeighborIndex::build(ahin)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.init_noise.max(0.0)).expect("non-negative deviation");
    let mut relations = RelationMatrices::identity(FEATURE_DIM);
    for r in [RelationType::Include, RelationType::Near] {
        relations
            .get_mut(r)
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x += noise.sample(&mut rng));
    }
    if config.epochs == 0 {
        return Ok(TrainedGae {
            relations,
            representations: inputs,
            losses: Vec::new(),
            date,
        });
    }

    let mut params: Vec<f64> = relations.include.as_slice().iter().chain(relations.near.as_slice()).copied().collect();
    let size = FEATURE_DIM * FEATURE_DIM;
    let mut opt = Adam::new(params.len(), config.lr);
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let negatives = sample_negatives(ahin, &positives, &mut rng);
        let mut grad = RelationGrads::zeros(FEATURE_DIM);
        let loss = gae_loss(&inputs, &index, &relations, &positives, &negatives, Some(&mut grad));
        losses.push(loss);
        let flat: Vec<f64> = grad.include.iter().chain(&grad.near).copied().collect();
        opt.step(&mut params, &flat);
        relations.include = RelationMatrix::from_vec(FEATURE_DIM, params[..size].to_vec())?;
        relations.near = RelationMatrix::from_vec(FEATURE_DIM, params[size..].to_vec())?;
    }
    let representations = encode(&inputs, &index, &relations);
    Ok(TrainedGae {
        relations,
        representations,
        losses,
        date,
    })
}
