//! Dense ReLU network with a sigmoid multi-label head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::bce_logit_grad;
use super::MlpConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    /// out_dim x in_dim, row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::validation(format!(
                "layer {in_dim}->{out_dim} got {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite layer parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            biases,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Activations recorded by [`MlpModel::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer; the last entry holds the output logits.
    pre: Vec<Vec<f64>>,
    /// Per-unit dropout multiplier of each hidden layer (0 or 1/(1-p)).
    masks: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn likelihoods(&self) -> &[f64] {
        &self.output
    }

    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("network has an output layer")
    }
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
            .for_each(|x| *x *= s);
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Dense>,
    /// Bumped on every parameter update so stale caches are detectable.
    generation: u64,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, drawn from `rng`.
    pub fn init(config: &MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_sizes);
        dims.push(config.output_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense::new(fan_in, fan_out, weights, vec![0.0; fan_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            layers,
            generation: 0,
        })
    }

    /// Initializes from `config.seed`.
    pub fn seeded(config: &MlpConfig) -> Result<Self> {
        Self::init(config, &mut ChaCha8Rng::seed_from_u64(config.seed))
    }

    pub fn from_layers(config: MlpConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_sizes);
        dims.push(config.output_dim);
        if layers.len() != dims.len() - 1
            || layers
                .iter()
                .zip(dims.windows(2))
                .any(|(l, w)| l.in_dim != w[0] || l.out_dim != w[1])
        {
            return Err(Error::validation("layer shapes do not chain as configured"));
        }
        Ok(Self {
            config,
            layers,
            generation: 0,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn forward(&self, features: &[f64], mode: Mode, rng: &mut impl Rng) -> Result<ForwardCache> {
        if features.len() != self.config.input_dim {
            return Err(Error::validation(format!(
                "model expects {} features, got {}",
                self.config.input_dim,
                features.len()
            )));
        }
        let p = self.config.dropout;
        let keep_scale = 1.0 / (1.0 - p);
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        let mut x = features.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&x);
            inputs.push(std::mem::take(&mut x));
            if i == last {
                x = z.iter().map(|&v| sigmoid(v)).collect();
            } else {
                let mask: Vec<f64> = match mode {
                    Mode::Train if p > 0.0 => (0..z.len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
                        .collect(),
                    _ => vec![1.0; z.len()],
                };
                x = z.iter().zip(&mask).map(|(&v, m)| v.max(0.0) * m).collect();
                masks.push(mask);
            }
            pre.push(z);
        }
        Ok(ForwardCache {
            generation: self.generation,
            inputs,
            pre,
            masks,
            output: x,
        })
    }

    /// Likelihoods in eval mode.
    pub fn likelihoods(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(features, Mode::Eval, &mut rng)?.output)
    }

    /// Gradient of the BCE loss of `cache`'s prediction against `targets`.
    pub fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> Result<Gradients> {
        if cache.generation != self.generation
            || cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(x, l)| x.len() != l.in_dim)
        {
            return Err(Error::validation("forward cache does not belong to this model state"));
        }
        if targets.len() != self.config.output_dim {
            return Err(Error::validation(format!(
                "expected {} targets, got {}",
                self.config.output_dim,
                targets.len()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = bce_logit_grad(&cache.output, targets);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            for (o, d) in delta.iter().enumerate() {
                let row = &mut grads.weights[i][o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter_mut().zip(input).for_each(|(g, x)| *g = d * x);
                grads.biases[i][o] = *d;
            }
            if i == 0 {
                break;
            }
            // Back through the previous hidden layer's dropout and ReLU.
            let mut d_in = vec![0.0; layer.in_dim];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                d_in.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
            let z = &cache.pre[i - 1];
            let mask = &cache.masks[i - 1];
            delta = d_in
                .iter()
                .zip(z.iter().zip(mask))
                .map(|(g, (&zv, m))| if zv > 0.0 { g * m } else { 0.0 })
                .collect();
        }
        Ok(grads)
    }

}
