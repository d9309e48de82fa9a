//! Public-perception (awareness) scoring from posts, with a conditional GAN
//! to synthesise post embeddings for areas that have too few of them.

mod cgan;
mod model;
mod text;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cgan::{train_cgan, CganBatch, CganConfig, CganPair, GeneratorLoss, LossCurves, TrainedCgan, MIN_CGAN_SAMPLES};
pub use model::{
    perception_loss, train_perception, PerceptionConfig, PerceptionModel, TrainedPerception, MIN_PERCEPTION_SAMPLES,
};
pub use text::{
    awareness_from_mean, embed_post, sentiment_awareness, tokenize, Embedder, EmbeddingSource, Lexicon, LexiconError,
    PostEmbedding, DEFAULT_EMBEDDING_DIM, DEFAULT_EMBEDDING_SEED,
};

use crate::geo::GeoId;
use crate::graph::{Ahin, NodeId};
use crate::ingest::{LocationIndex, RawPost};

/// Real posts needed on one area and date before synthesis is skipped.
pub const REAL_POST_THRESHOLD: usize = 5;
pub const CONDITION_DIM: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("{have} training samples, need at least {need}; fall back to direct lexicon scoring")]
    InsufficientData { have: usize, need: usize },
    #[error("held-out mean absolute error {mae:.4} exceeds {limit}; fall back to direct lexicon scoring")]
    Underfit { mae: f64, limit: f64 },
    #[error("expected dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("labels must lie in [0, 1]")]
    InvalidLabel,
    #[error("perception training produced a non-finite loss")]
    Diverged,
    #[error("cGAN training diverged in epoch {epoch}")]
    CganDiverged {
        epoch: usize,
        /// Parameters at the end of the last epoch with finite losses.
        checkpoint: Box<CganPair>,
        curves: LossCurves,
    },
}

/// Generator condition: normalised disease and demographic sub-vectors and
/// the coordinate scaled to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub a1: [f64; 4],
    pub a2: [f64; 4],
    pub o: [f64; 2],
}

impl Condition {
    pub fn new(a1: [f64; 4], a2: [f64; 4], lat: f64, lon: f64) -> Self {
        Condition {
            a1,
            a2,
            o: [(lat + 90.0) / 180.0, (lon + 180.0) / 360.0],
        }
    }

    pub fn of(ahin: &Ahin, node: NodeId, date: NaiveDate) -> Self {
        let n = ahin.normalized(node, date);
        let (lat, lon) = ahin.node(node).gps();
        Condition::new([n[0], n[1], n[2], n[3]], [n[4], n[5], n[6], n[7]], lat, lon)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(CONDITION_DIM);
        v.extend_from_slice(&self.a1);
        v.extend_from_slice(&self.a2);
        v.extend_from_slice(&self.o);
        v
    }
}

/// A trained generator paired with the model that scores its output.
#[derive(Debug, Clone, Copy)]
pub struct Synthesizer<'a> {
    cgan: &'a CganPair,
    model: &'a PerceptionModel,
}

impl<'a> Synthesizer<'a> {
    pub fn new(cgan: &'a CganPair, model: &'a PerceptionModel) -> Result<Self, PerceptionError> {
        if cgan.embedding_dim != model.input_dim() {
            return Err(PerceptionError::Dimension {
                expected: model.input_dim(),
                found: cgan.embedding_dim,
            });
        }
        if cgan.condition_dim != CONDITION_DIM {
            return Err(PerceptionError::Dimension {
                expected: CONDITION_DIM,
                found: cgan.condition_dim,
            });
        }
        Ok(Synthesizer { cgan, model })
    }

    pub fn score(&self, condition: &Condition, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = condition.to_vec();
        self.cgan
            .sample(&c, m, &mut rng)
            .iter()
            .map(|e| self.model.predict(e))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionSource {
    /// At least the threshold of real posts.
    Real,
    /// Scored synthetic embeddings.
    Synthetic,
    /// Fewer real posts than the threshold and no synthesiser available.
    SparseReal,
    /// Nothing to score; the value is zero-padded.
    Padded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaPerception {
    pub value: f64,
    pub source: PerceptionSource,
    pub real_posts: usize,
    pub synthetic_posts: usize,
}

impl AreaPerception {
    pub fn padded(&self) -> bool {
        self.source == PerceptionSource::Padded
    }
}

/// Order-independent mean: sorting first makes the floating-point sum the
/// same for any permutation of `values`.
fn stable_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Awareness value for one area and date from the scores of its real posts,
/// or from `m` synthetic embeddings when real posts are below the threshold.
pub fn area_perception(
    post_scores: &[f64],
    synthesizer: Option<Synthesizer<'_>>,
    condition: &Condition,
    m: usize,
    seed: u64,
) -> AreaPerception {
    let real_posts = post_scores.len();
    if real_posts >= REAL_POST_THRESHOLD {
        return AreaPerception {
            value: stable_mean(post_scores).clamp(0.0, 1.0),
            source: PerceptionSource::Real,
            real_posts,
            synthetic_posts: 0,
        };
    }
    if let (Some(synth), true) = (synthesizer, m > 0) {
        let scores = synth.score(condition, m, seed);
        return AreaPerception {
            value: stable_mean(&scores).clamp(0.0, 1.0),
            source: PerceptionSource::Synthetic,
            real_posts,
            synthetic_posts: m,
        };
    }
    if real_posts > 0 {
        return AreaPerception {
            value: stable_mean(post_scores).clamp(0.0, 1.0),
            source: PerceptionSource::SparseReal,
            real_posts,
            synthetic_posts: 0,
        };
    }
    AreaPerception {
        value: 0.0,
        source: PerceptionSource::Padded,
        real_posts: 0,
        synthetic_posts: 0,
    }
}

/// Per-area, per-day seed so synthetic draws do not depend on query order.
pub fn synthesis_seed(seed: u64, geo_id: &str, date: NaiveDate) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for b in geo_id.bytes().chain(date.to_string().into_bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPost {
    pub post_id: String,
    pub date: NaiveDate,
    pub awareness: f64,
    pub title: String,
    pub snippet: String,
    pub ambiguous: bool,
}

pub const SNIPPET_CHARS: usize = 160;

fn snippet(text: &str) -> String {
    let mut s: String = text.chars().take(SNIPPET_CHARS).collect();
    if text.chars().count() > SNIPPET_CHARS {
        s.push('…');
    }
    s
}

/// Scores every post with `lexicon` and files it under each area it mentions.
pub fn attribute_posts(
    posts: &[RawPost],
    locations: &LocationIndex<'_>,
    lexicon: &Lexicon,
) -> BTreeMap<GeoId, Vec<ScoredPost>> {
    let mut out: BTreeMap<GeoId, Vec<ScoredPost>> = BTreeMap::new();
    for post in posts {
        let found = locations.extract(post);
        if found.geo_ids.is_empty() {
            continue;
        }
        let text = post.text();
        let scored = ScoredPost {
            post_id: post.post_id.clone(),
            date: post.date(),
            awareness: lexicon.awareness(&text),
            title: post.title.clone(),
            snippet: snippet(&post.body),
            ambiguous: found.ambiguous,
        };
        for id in found.geo_ids {
            out.entry(id).or_default().push(scored.clone());
        }
    }
    for list in out.values_mut() {
        list.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.post_id.cmp(&b.post_id)));
    }
    out
}
