use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::nn::{bce_with_logit, sigmoid, Activation, Adam, Mlp};

pub const MIN_PERCEPTION_SAMPLES: usize = 100;

/// Embedding to awareness regressor: one tanh hidden layer and a sigmoid head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionModel {
    net: Mlp,
}

impl PerceptionModel {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PerceptionModel {
            net: Mlp::new(&[input_dim, hidden, 1], &[Activation::Tanh, Activation::Identity], &mut rng),
        }
    }

    pub fn from_net(net: Mlp) -> Option<Self> {
        (net.output_dim() == 1).then_some(PerceptionModel { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn predict(&self, embedding: &[f64]) -> f64 {
        sigmoid(self.net.forward(embedding)[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub holdout_fraction: f64,
    pub max_holdout_mae: f64,
    pub seed: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            hidden: 16,
            epochs: 400,
            lr: 1e-2,
            holdout_fraction: 0.2,
            max_holdout_mae: 0.15,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPerception {
    pub model: PerceptionModel,
    pub losses: Vec<f64>,
    pub holdout_mae: f64,
}

/// Mean soft-label cross-entropy over `samples`, accumulating parameter
/// gradients into `grad` when given.
pub fn perception_loss(model: &PerceptionModel, samples: &[(&[f64], f64)], mut grad: Option<&mut [f64]>) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for &(x, y) in samples {
        let trace = model.net.forward_trace(x);
        let (loss, dlogit) = bce_with_logit(trace.output()[0], y);
        total += loss;
        if let Some(g) = grad.as_deref_mut() {
            model.net.backward(&trace, &[dlogit / n], g);
        }
    }
    total / n
}

/// Trains against awareness labels in [0, 1]. The last `holdout_fraction`
/// of a seeded shuffle is held out and scored by mean absolute error.
pub fn train_perception(
    samples: &[(Vec<f64>, f64)],
    config: &PerceptionConfig,
) -> Result<TrainedPerception, PerceptionError> {
    if samples.len() < MIN_PERCEPTION_SAMPLES {
        return Err(PerceptionError::InsufficientData {
            have: samples.len(),
            need: MIN_PERCEPTION_SAMPLES,
        });
    }
    let dim = samples[0].0.len();
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.len() != dim) {
        return Err(PerceptionError::Dimension {
            expected: dim,
            found: x.len(),
        });
    }
    if samples.iter().any(|(_, y)| !(0.0..=1.0).contains(y)) {
        return Err(PerceptionError::InvalidLabel);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let holdout = ((samples.len() as f64 * config.holdout_fraction).ceil() as usize).min(samples.len() - 1);
    let (train_idx, test_idx) = order.split_at(samples.len() - holdout);
    let train: Vec<(&[f64], f64)> = train_idx.iter().map(|&i| (samples[i].0.as_slice(), samples[i].1)).collect();

    let mut model = PerceptionModel::new(dim, config.hidden, config.seed.wrapping_add(1));
    let mut opt = Adam::new(model.net.param_count(), config.lr);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut grad = vec![0.0; model.net.param_count()];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = perception_loss(&model, &train, Some(&mut grad));
        if !loss.is_finite() {
            return Err(PerceptionError::Diverged);
        }
        losses.push(loss);
        opt.step(model.net.params_mut(), &grad);
    }

    let holdout_mae = if test_idx.is_empty() {
        0.0
    } else {
        test_idx
            .iter()
            .map(|&i| (model.predict(&samples[i].0) - samples[i].1).abs())
            .sum::<f64>()
            / test_idx.len() as f64
    };
    if holdout_mae > config.max_holdout_mae {
        return Err(PerceptionError::Underfit {
            mae: holdout_mae,
            limit: config.max_holdout_mae,
        });
    }
    Ok(TrainedPerception {
        model,
        losses,
        holdout_mae,
    })
}
