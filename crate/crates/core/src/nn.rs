//! Small dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector so optimizers, checkpoints and
//! finite-difference checks can treat every network the same way.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> String {
        match self {
            Activation::Identity => "identity".into(),
            Activation::Tanh => "tanh".into(),
            Activation::LeakyRelu(s) => format!("leaky_relu:{s}"),
            Activation::Sigmoid => "sigmoid".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => s
                .strip_prefix("leaky_relu:")
                .and_then(|v| v.parse().ok())
                .map(Activation::LeakyRelu),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a (possibly soft) target, and its
/// derivative with respect to the logit.
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    let loss = target * softplus(-logit) + (1.0 - target) * softplus(logit);
    (loss, sigmoid(logit) - target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[l]` is the input to layer `l`; the last entry is the output.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least one layer");
        assert_eq!(sizes.len() - 1, activations.len());
        let count = param_count(sizes);
        let mut params = Vec::with_capacity(count);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params,
        }
    }

    pub fn from_parts(sizes: Vec<usize>, activations: Vec<Activation>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.len() - 1 == activations.len() && params.len() == param_count(&sizes))
            .then_some(Mlp {
                sizes,
                activations,
                params,
            })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (weights, bias) = self.params[offset..offset + n_in * n_out + n_out].split_at(n_in * n_out);
            cur = (0..n_out)
                .map(|o| {
                    let z = dot(&weights[o * n_in..(o + 1) * n_in], &cur) + bias[o];
                    self.activations[l].apply(z)
                })
                .collect();
            offset += n_in * n_out + n_out;
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let mut values = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.activations.len());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (weights, bias) = self.params[offset..offset + n_in * n_out + n_out].split_at(n_in * n_out);
            let input = values.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| dot(&weights[o * n_in..(o + 1) * n_in], input) + bias[o])
                .collect();
            values.push(z.iter().map(|&v| self.activations[l].apply(v)).collect());
            pre.push(z);
            offset += n_in * n_out + n_out;
        }
        Trace { values, pre }
    }

    /// Accumulates parameter gradients into `grad` given `d loss / d output`
    /// and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len());
        let layers = self.activations.len();
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut upstream = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.values[l];
            let output = &trace.values[l + 1];
            let delta: Vec<f64> = (0..n_out)
                .map(|o| upstream[o] * self.activations[l].derivative(trace.pre[l][o], output[o]))
                .collect();
            let base = offsets[l];
            let weights = &self.params[base..base + n_in * n_out];
            let mut down = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * input[i];
                    down[i] += d * weights[o * n_in + i];
                }
                grad[base + n_in * n_out + o] += d;
            }
            upstream = down;
        }
        upstream
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self::with_betas(len, lr, 0.9, 0.999)
    }

    pub fn with_betas(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Central finite-difference gradient of `f` at `params`.
pub fn numerical_gradient(params: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + h;
            let plus = f(params);
            params[i] = orig - h;
            let minus = f(params);
            params[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise relative error, with `floor` guarding near-zero entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in [
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::LeakyRelu(0.2),
            Activation::Identity,
        ] {
            let net = Mlp::new(&[3, 4, 2], &[act, Activation::Identity], &mut rng);
            let x = [0.3, -0.7, 1.1];
            let target = [0.5, -0.25];
            let loss = |net: &Mlp| -> f64 {
                let y = net.forward(&x);
                y.iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
            };
            let trace = net.forward_trace(&x);
            let g_out: Vec<f64> = trace.output().iter().zip(&target).map(|(a, b)| a - b).collect();
            let mut grad = vec![0.0; net.param_count()];
            net.backward(&trace, &g_out, &mut grad);
            let mut params = net.params().to_vec();
            let sizes = net.sizes().to_vec();
            let acts = net.activations().to_vec();
            let numeric = numerical_gradient(&mut params, 1e-6, |p| {
                loss(&Mlp::from_parts(sizes.clone(), acts.clone(), p.to_vec()).unwrap())
            });
            assert!(max_relative_error(&grad, &numeric, 1e-7) < 1e-5, "{act:?}");
        }
    }

    #[test]
    fn input_gradient_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[2, 5, 1], &[Activation::Tanh, Activation::Identity], &mut rng);
        let x = [0.4, -0.2];
        let trace = net.forward_trace(&x);
        let mut grad = vec![0.0; net.param_count()];
        let dx = net.backward(&trace, &[1.0], &mut grad);
        let mut xs = x.to_vec();
        let numeric = numerical_gradient(&mut xs, 1e-6, |p| net.forward(p)[0]);
        assert!(max_relative_error(&dx, &numeric, 1e-7) < 1e-6);
    }

    #[test]
    fn stable_logistic_pieces() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(softplus(1000.0).is_finite());
        let (l, g) = bce_with_logit(0.0, 1.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g + 0.5).abs() < 1e-12);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [
            Activation::Identity,
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::LeakyRelu(0.2),
        ] {
            assert_eq!(Activation::parse(&a.name()), Some(a));
        }
    }
}
