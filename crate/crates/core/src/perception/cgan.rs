use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::nn::{sigmoid, softplus, Activation, Adam, Mlp};

pub const MIN_CGAN_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Minimise `-log D(G(z))`.
    #[default]
    NonSaturating,
    /// Minimise `log(1 - D(G(z)))`.
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CganConfig {
    pub noise_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub beta1: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_loss: GeneratorLoss,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for CganConfig {
    fn default() -> Self {
        CganConfig {
            noise_dim: 8,
            hidden: 64,
            lr: 1e-3,
            beta1: 0.5,
            epochs: 100,
            batch_size: 64,
            generator_loss: GeneratorLoss::NonSaturating,
            leaky_slope: 0.2,
            seed: 7,
        }
    }
}

/// Generator `G(z | c)` and discriminator `D(p | c)`. The discriminator
/// network emits a logit; [`CganPair::discriminate`] squashes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CganPair {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub noise_dim: usize,
    pub embedding_dim: usize,
    pub condition_dim: usize,
}

/// One minibatch: real `(embedding, condition)` pairs and `(noise, condition)`
/// pairs for the generator.
#[derive(Debug, Clone, Default)]
pub struct CganBatch {
    pub real: Vec<(Vec<f64>, Vec<f64>)>,
    pub noise: Vec<(Vec<f64>, Vec<f64>)>,
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

// Keeps reported probabilities strictly inside (0, 1).
const PROB_EPS: f64 = 1e-15;

impl CganPair {
    pub fn new(embedding_dim: usize, condition_dim: usize, config: &CganConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let act = Activation::LeakyRelu(config.leaky_slope);
        let generator = Mlp::new(
            &[config.noise_dim + condition_dim, config.hidden, embedding_dim],
            &[act, Activation::Identity],
            &mut rng,
        );
        let discriminator = Mlp::new(
            &[embedding_dim + condition_dim, config.hidden, 1],
            &[act, Activation::Identity],
            &mut rng,
        );
        CganPair {
            generator,
            discriminator,
            noise_dim: config.noise_dim,
            embedding_dim,
            condition_dim,
        }
    }

    pub fn generate(&self, noise: &[f64], condition: &[f64]) -> Vec<f64> {
        self.generator.forward(&concat(noise, condition))
    }

    pub fn discriminator_logit(&self, embedding: &[f64], condition: &[f64]) -> f64 {
        self.discriminator.forward(&concat(embedding, condition))[0]
    }

    /// Probability that `embedding` is real under `condition`, in (0, 1).
    pub fn discriminate(&self, embedding: &[f64], condition: &[f64]) -> f64 {
        sigmoid(self.discriminator_logit(embedding, condition)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.noise_dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Draws `m` synthetic embeddings under `condition`.
    pub fn sample<R: Rng>(&self, condition: &[f64], m: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| {
                let z = self.sample_noise(rng);
                self.generate(&z, condition)
            })
            .collect()
    }

    /// `-mean log D(real) - mean log(1 - D(G(z)))`, i.e. the negated value
    /// the discriminator ascends. Gradients go to discriminator parameters.
    pub fn discriminator_loss(&self, batch: &CganBatch, mut grad: Option<&mut [f64]>) -> f64 {
        let mut total = 0.0;
        let n_real = batch.real.len().max(1) as f64;
        for (p, c) in &batch.real {
            let trace = self.discriminator.forward_trace(&concat(p, c));
            let logit = trace.output()[0];
            total += softplus(-logit) / n_real;
            if let Some(g) = grad.as_deref_mut() {
                self.discriminator.backward(&trace, &[-sigmoid(-logit) / n_real], g);
            }
        }
        let n_fake = batch.noise.len().max(1) as f64;
        for (z, c) in &batch.noise {
            let fake = self.generate(z, c);
            let trace = self.discriminator.forward_trace(&concat(&fake, c));
            let logit = trace.output()[0];
            total += softplus(logit) / n_fake;
            if let Some(g) = grad.as_deref_mut() {
                self.discriminator.backward(&trace, &[sigmoid(logit) / n_fake], g);
            }
        }
        total
    }

    /// Generator objective over `noise`; gradients go to generator parameters.
    pub fn generator_loss(
        &self,
        noise: &[(Vec<f64>, Vec<f64>)],
        kind: GeneratorLoss,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let n = noise.len().max(1) as f64;
        let mut total = 0.0;
        let mut scratch = vec![0.0; self.discriminator.param_count()];
        for (z, c) in noise {
            let g_trace = self.generator.forward_trace(&concat(z, c));
            let d_trace = self.discriminator.forward_trace(&concat(g_trace.output(), c));
            let logit = d_trace.output()[0];
            let (loss, dlogit) = match kind {
                GeneratorLoss::NonSaturating => (softplus(-logit), -sigmoid(-logit)),
                GeneratorLoss::Saturating => (-softplus(logit), -sigmoid(logit)),
            };
            total += loss / n;
            if let Some(g) = grad.as_deref_mut() {
                let d_input = self.discriminator.backward(&d_trace, &[dlogit / n], &mut scratch);
                self.generator.backward(&g_trace, &d_input[..self.embedding_dim], g);
            }
        }
        total
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurves {
    pub discriminator: Vec<f64>,
    pub generator: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedCgan {
    pub pair: CganPair,
    pub curves: LossCurves,
}

/// Alternating 1:1 discriminator and generator Adam updates over shuffled
/// minibatches. Conditions for generated samples are taken from the same
/// minibatch so the generator sees the empirical condition distribution.
pub fn train_cgan(samples: &[(Vec<f64>, Vec<f64>)], config: &CganConfig) -> Result<TrainedCgan, PerceptionError> {
    if samples.len() < MIN_CGAN_SAMPLES {
        return Err(PerceptionError::InsufficientData {
            have: samples.len(),
            need: MIN_CGAN_SAMPLES,
        });
    }
    let (e_dim, c_dim) = (samples[0].0.len(), samples[0].1.len());
    for (e, c) in samples {
        if e.len() != e_dim {
            return Err(PerceptionError::Dimension {
                expected: e_dim,
                found: e.len(),
            });
        }
        if c.len() != c_dim {
            return Err(PerceptionError::Dimension {
                expected: c_dim,
                found: c.len(),
            });
        }
    }

    let mut pair = CganPair::new(e_dim, c_dim, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut d_opt = Adam::with_betas(pair.discriminator.param_count(), config.lr, config.beta1, 0.999);
    let mut g_opt = Adam::with_betas(pair.generator.param_count(), config.lr, config.beta1, 0.999);
    let mut d_grad = vec![0.0; pair.discriminator.param_count()];
    let mut g_grad = vec![0.0; pair.generator.param_count()];
    let mut curves = LossCurves::default();
    let mut checkpoint = pair.clone();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch_size = config.batch_size.max(1);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(batch_size) {
            let real: Vec<(Vec<f64>, Vec<f64>)> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let noise: Vec<(Vec<f64>, Vec<f64>)> =
                real.iter().map(|(_, c)| (pair.sample_noise(&mut rng), c.clone())).collect();
            let batch = CganBatch { real, noise };
            d_grad.iter_mut().for_each(|g| *g = 0.0);
            let d_loss = pair.discriminator_loss(&batch, Some(&mut d_grad));
            d_opt.step(pair.discriminator.params_mut(), &d_grad);

            let noise: Vec<(Vec<f64>, Vec<f64>)> =
                batch.real.iter().map(|(_, c)| (pair.sample_noise(&mut rng), c.clone())).collect();
            g_grad.iter_mut().for_each(|g| *g = 0.0);
            let g_loss = pair.generator_loss(&noise, config.generator_loss, Some(&mut g_grad));
            g_opt.step(pair.generator.params_mut(), &g_grad);

            if !(d_loss.is_finite() && g_loss.is_finite())
                || !pair.discriminator.params().iter().chain(pair.generator.params()).all(|p| p.is_finite())
            {
                return Err(PerceptionError::CganDiverged {
                    epoch,
                    checkpoint: Box::new(checkpoint),
                    curves,
                });
            }
            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        curves.discriminator.push(d_sum / batches as f64);
        curves.generator.push(g_sum / batches as f64);
        checkpoint = pair.clone();
    }
    Ok(TrainedCgan { pair, curves })
}
