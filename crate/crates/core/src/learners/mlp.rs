//! Small fully connected Q-network with ReLU hidden layers and a linear head.
//!
//! Parameters live in one flat buffer (per layer: weights row-major
//! `out x in`, then biases) so that copies, clipping and optimizer steps are
//! plain slice operations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Flat gradient buffer, same layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales to at most `max_norm` in L2; returns the pre-clip norm.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            self.0.iter_mut().for_each(|g| *g *= scale);
        }
        norm
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// He-style uniform init: weights on `±sqrt(6 / fan_in)`, zero biases.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::contract("network needs at least two non-empty layers"));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
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

    /// Overwrites this network's parameters with `other`'s.
    pub fn copy_from(&mut self, other: &Mlp) {
        debug_assert_eq!(self.sizes, other.sizes);
        self.params.copy_from_slice(&other.params);
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every layer's post-activation output;
    /// `acts[0]` is the input and the last entry the Q-values.
    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z: f64 = row.iter().zip(prev).map(|(w, x)| w * x).sum::<f64>() + bias[o];
                out.push(if l + 1 < layers { z.max(0.0) } else { z });
            }
            offset += n_in * n_out + n_out;
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_all(input).pop().unwrap())
    }

    /// Mean squared TD error over the batch, `(1/N) sum (q(x_i)[a_i] - y_i)^2`,
    /// and its gradient with respect to every parameter.
    pub fn td_loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        if inputs.len() != actions.len() || inputs.len() != targets.len() || inputs.is_empty() {
            return Err(Error::contract("batch arrays must be non-empty and equally long"));
        }
        let n = inputs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let layers = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();

        for ((input, &action), &target) in inputs.iter().zip(actions).zip(targets) {
            self.check_input(input)?;
            if action >= self.output_dim() {
                return Err(Error::contract(format!("action {action} out of range")));
            }
            let acts = self.forward_all(input);
            let err = acts[layers][action] - target;
            loss += err * err;

            // dL/dz for the output layer: only the taken action's unit.
            let mut delta = vec![0.0; self.output_dim()];
            delta[action] = 2.0 * err / n;
            for l in (0..layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let prev = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (g, x) in row.iter_mut().zip(prev) {
                        *g += d * x;
                    }
                    grad[off + n_in * n_out + o] += d;
                }
                if l == 0 {
                    break;
                }
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev_delta = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (pd, w) in prev_delta.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *pd += d * w;
                    }
                }
                // ReLU derivative at the hidden layer feeding this one.
                for (pd, a) in prev_delta.iter_mut().zip(&acts[l]) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        Ok((loss / n, Gradients(grad)))
    }

    /// Loss only; used by finite-difference checks.
    pub fn td_loss(&self, inputs: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<f64> {
        let mut loss = 0.0;
        for ((input, &a), &y) in inputs.iter().zip(actions).zip(targets) {
            let q = self.forward(input)?;
            loss += (q[a] - y).powi(2);
        }
        Ok(loss / inputs.len() as f64)
    }
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: i32,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: vec![0.0; params],
                v: vec![0.0; params],
            },
        }
    }

    pub fn apply(&mut self, net: &mut Mlp, grad: &Gradients) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in net.params.iter_mut().zip(&grad.0) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..net.params.len() {
                    let g = grad.0[i];
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
                    net.params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
    }
}
