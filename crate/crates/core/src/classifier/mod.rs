//! Multi-label selector: an MLP over base-technique difference vectors that
//! scores each candidate technique's complementarity, trained with
//! sigmoid outputs and binary cross entropy.

mod features;
mod loss;
mod mlp;
mod model_io;
mod search;
mod train;

pub use features::{FeatureBatch, FeatureMode, TrainingExample};
pub use loss::{bce_loss, CLAMP};
pub use mlp::{Dense, ForwardCache, Gradients, MlpModel, Mode};
pub use model_io::{load_model, save_model, write_history};
pub use search::{random_search, SearchOutcome, SearchSpace};
pub use train::{train, EpochRecord, History};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl MlpConfig {
    /// The tuned configuration: one hidden layer of 32 units, dropout
    /// 0.126450, learning rate 4.550325e-4, batch size 8, 17 epochs.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![32],
            output_dim,
            dropout: 0.126450,
            learning_rate: 4.550325e-4,
            batch_size: 8,
            epochs: 17,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::validation("input and output dims must be positive"));
        }
        if !(1..=3).contains(&self.hidden_sizes.len()) {
            return Err(Error::validation(format!(
                "1 to 3 hidden layers supported, got {}",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::validation("hidden layer of size 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::validation(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::validation("batch size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn select_index(likelihoods: &[f64]) -> usize {
    crate::fusion::argmax(likelihoods)
}

/// Most complementary candidate for `features`, as a column index into the
/// model's technique ordering.
///
/// The argmax is taken over output logits, which orders candidates exactly as
/// the sigmoid likelihoods do but cannot tie through saturation at 1.0.
pub fn predict(model: &MlpModel, features: &[f64]) -> Result<usize> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let cache = model.forward(features, Mode::Eval, &mut rng)?;
    Ok(select_index(cache.logits()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(select_index(&[0.2, 0.9, 0.4]), 1);
        assert_eq!(select_index(&[0.5, 0.5]), 0);
    }

    #[test]
    fn output_bias_shift_keeps_prediction() {
        let cfg = MlpConfig::new(6, 4);
        let mut m = MlpModel::seeded(&cfg).unwrap();
        let x = [0.3, -1.0, 0.2, 0.8, -0.5, 1.5];
        let before = predict(&m, &x).unwrap();
        let last = m.layers_mut().last_mut().unwrap();
        last.biases_mut().iter_mut().for_each(|b| *b += 2.5);
        assert_eq!(predict(&m, &x).unwrap(), before);
    }

    #[test]
    fn config_validation() {
        let ok = MlpConfig::new(128, 9);
        assert!(ok.validate().is_ok());
        let bad = |f: fn(&mut MlpConfig)| {
            let mut c = ok.clone();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.hidden_sizes.clear()));
        assert!(bad(|c| c.hidden_sizes = vec![32; 4]));
        assert!(bad(|c| c.dropout = 1.0));
        assert!(bad(|c| c.learning_rate = -1.0));
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.output_dim = 0));
    }
}
