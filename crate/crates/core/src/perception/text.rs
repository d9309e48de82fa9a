use std::collections::HashMap;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_EMBEDDING_DIM: usize = 32;
pub const DEFAULT_EMBEDDING_SEED: u64 = 0x5eed_0001;

/// Lowercased word tokens; hyphens and inner apostrophes stay attached.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-' || c == '\u{2019}'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '-' || c == '\u{2019}'))
        .filter(|t| !t.is_empty())
        .map(|t| t.replace('\u{2019}', "'").to_lowercase())
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostEmbedding {
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

/// Hashed bag-of-tokens projection. Each distinct token owns a fixed Gaussian
/// row derived from its hash and the embedder seed; a document is the
/// L2-normalised sum of its token rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder {
            dim: DEFAULT_EMBEDDING_DIM,
            seed: DEFAULT_EMBEDDING_SEED,
        }
    }
}

impl Embedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Embedder { dim, seed }
    }

    fn token_row(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed.rotate_left(17));
        for v in out.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *v += x;
        }
    }

    pub fn embed(&self, text: &str) -> PostEmbedding {
        let mut vector = vec![0.0; self.dim];
        for token in tokenize(text) {
            self.token_row(&token, &mut vector);
        }
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            vector.iter_mut().for_each(|v| *v /= norm);
        }
        PostEmbedding {
            vector,
            source: EmbeddingSource::Real,
        }
    }
}

/// Embeds with the default dimension and seed.
pub fn embed_post(text: &str) -> PostEmbedding {
    Embedder::default().embed(text)
}

const NEGATORS: &[&str] = &[
    "not", "no", "never", "don't", "dont", "isn't", "isnt", "aren't", "wasn't", "weren't", "can't", "cant",
    "won't", "without", "hardly",
];
const NEGATION_SPAN: usize = 3;

#[derive(Debug, Clone)]
pub struct Lexicon {
    weights: HashMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
#[error("lexicon line {line}: {reason}")]
pub struct LexiconError {
    pub line: usize,
    pub reason: String,
}

impl Lexicon {
    /// Parses `term<TAB>weight` lines; `#` starts a comment line.
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut weights = HashMap::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| LexiconError {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (term, weight) = line.split_once('\t').ok_or_else(|| err("expected term<TAB>weight"))?;
            let weight: f64 = weight.trim().parse().map_err(|_| err("weight is not a number"))?;
            if !weight.is_finite() {
                return Err(err("weight is not finite"));
            }
            weights.insert(term.trim().to_lowercase(), weight);
        }
        Ok(Lexicon { weights })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> &'static Lexicon {
        static BUNDLED: OnceLock<Lexicon> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            Lexicon::parse(include_str!("../../data/lexicon.tsv")).expect("bundled lexicon parses")
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.weights.get(term).copied()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Matched weights in text order, with negation applied.
    pub fn matches(&self, text: &str) -> Vec<f64> {
        let mut out = Vec::new();
        let mut negate_until = 0usize;
        for (i, token) in tokenize(text).iter().enumerate() {
            if NEGATORS.contains(&token.as_str()) {
                negate_until = i + NEGATION_SPAN + 1;
                continue;
            }
            if let Some(w) = self.weight(token) {
                if i < negate_until {
                    out.push(-w);
                    negate_until = 0;
                } else {
                    out.push(w);
                }
            }
        }
        out
    }

    /// Awareness in [0, 1]: 0.5 when nothing matches, otherwise the mean
    /// matched weight squashed through `0.5 + 0.5 tanh(mean / 2)`.
    pub fn awareness(&self, text: &str) -> f64 {
        let matched = self.matches(text);
        if matched.is_empty() {
            return 0.5;
        }
        let mean = matched.iter().sum::<f64>() / matched.len() as f64;
        awareness_from_mean(mean)
    }
}

pub fn awareness_from_mean(mean: f64) -> f64 {
    0.5 + 0.5 * (mean / 2.0).tanh()
}

/// Awareness score of `text` under the bundled lexicon.
pub fn sentiment_awareness(text: &str) -> f64 {
    Lexicon::bundled().awareness(text)
}
