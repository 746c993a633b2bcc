//! Uniform random search over the selector's hyperparameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, FeatureBatch, MlpConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub min_layers: usize,
    pub max_layers: usize,
    /// One size is drawn per trial and shared by all hidden layers.
    pub hidden_sizes: Vec<usize>,
    pub dropout: (f64, f64),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            min_layers: 1,
            max_layers: 3,
            hidden_sizes: vec![32, 64, 128, 256],
            dropout: (0.0, 0.5),
            learning_rate: (1e-5, 1e-2),
            batch_sizes: vec![4, 8, 16, 32],
        }
    }
}

impl SearchSpace {
    /// A space holding exactly one configuration.
    pub fn pinned(config: &MlpConfig) -> Self {
        let size = config.hidden_sizes[0];
        Self {
            min_layers: config.hidden_sizes.len(),
            max_layers: config.hidden_sizes.len(),
            hidden_sizes: vec![size],
            dropout: (config.dropout, config.dropout),
            learning_rate: (config.learning_rate, config.learning_rate),
            batch_sizes: vec![config.batch_size],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::validation("search space has no hidden or batch sizes"));
        }
        if self.min_layers == 0 || self.min_layers > self.max_layers || self.max_layers > 3 {
            return Err(Error::validation("hidden layer count range must lie within 1..=3"));
        }
        let (dlo, dhi) = self.dropout;
        if !(0.0..1.0).contains(&dlo) || !(0.0..1.0).contains(&dhi) || dlo > dhi {
            return Err(Error::validation("dropout range must lie within [0, 1)"));
        }
        let (llo, lhi) = self.learning_rate;
        if llo.is_nan() || llo <= 0.0 || llo > lhi || !lhi.is_finite() {
            return Err(Error::validation("learning-rate range must be positive and ordered"));
        }
        Ok(())
    }

    /// Draws one configuration; dims, epochs and seed come from `template`.
    pub fn sample(&self, rng: &mut impl Rng, template: &MlpConfig) -> MlpConfig {
        let layers = rng.random_range(self.min_layers..=self.max_layers);
        let size = self.hidden_sizes[rng.random_range(0..self.hidden_sizes.len())];
        let (dlo, dhi) = self.dropout;
        let dropout = if dlo == dhi { dlo } else { rng.random_range(dlo..dhi) };
        let (llo, lhi) = self.learning_rate;
        let learning_rate = if llo == lhi {
            llo
        } else {
            rng.random_range(llo.ln()..lhi.ln()).exp()
        };
        let batch_size = self.batch_sizes[rng.random_range(0..self.batch_sizes.len())];
        MlpConfig {
            hidden_sizes: vec![size; layers],
            dropout,
            learning_rate,
            batch_size,
            ..template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: MlpConfig,
    /// Every sampled configuration with its best validation BCE.
    pub trials: Vec<(MlpConfig, f64)>,
}

/// Trains `budget` sampled configurations and keeps the one with the lowest
/// validation BCE (earliest on ties).
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    template: &MlpConfig,
    train_set: &FeatureBatch,
    val_set: &FeatureBatch,
) -> Result<SearchOutcome> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::validation("search budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(f64, MlpConfig)> = None;
    for _ in 0..budget {
        let cfg = space.sample(&mut rng, template);
        let (_, history) = train(&cfg, train_set, val_set)?;
        let loss = history.best_val_bce();
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, cfg.clone()));
        }
        trials.push((cfg, loss));
    }
    Ok(SearchOutcome {
        best: best.expect("budget >= 1").1,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{FeatureMode, TrainingExample};

    fn tiny_sets() -> (FeatureBatch, FeatureBatch) {
        let mk = |n: usize| {
            let mut b = FeatureBatch::new(FeatureMode::Training);
            for i in 0..n {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                let t = if s > 0.0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                b.push(
                    TrainingExample { features: vec![s, 0.1 * i as f64], targets: t },
                    FeatureMode::Training,
                )
                .unwrap();
            }
            b
        };
        (mk(16), mk(6))
    }

    fn template() -> MlpConfig {
        MlpConfig {
            epochs: 2,
            ..MlpConfig::new(2, 2)
        }
    }

    #[test]
    fn budget_one_returns_the_sample() {
        let (tr, va) = tiny_sets();
        let space = SearchSpace::default();
        let out = random_search(&space, 1, 9, &template(), &tr, &va).unwrap();
        let expected = space.sample(&mut ChaCha8Rng::seed_from_u64(9), &template());
        assert_eq!(out.best, expected);
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn same_seed_same_sequence() {
        let space = SearchSpace::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| space.sample(&mut rng, &template())).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
        for c in draw(3) {
            assert!((1..=3).contains(&c.hidden_sizes.len()));
            assert!([32, 64, 128, 256].contains(&c.hidden_sizes[0]));
            assert!((0.0..0.5).contains(&c.dropout));
            assert!((1e-5..=1e-2).contains(&c.learning_rate));
            assert!([4, 8, 16, 32].contains(&c.batch_size));
        }
    }

    #[test]
    fn pinned_space_returns_tuned_values() {
        let (tr, va) = tiny_sets();
        let tuned = MlpConfig {
            input_dim: 2,
            output_dim: 2,
            epochs: 2,
            ..MlpConfig::new(2, 2)
        };
        let out = random_search(&SearchSpace::pinned(&tuned), 3, 1, &template(), &tr, &va).unwrap();
        assert_eq!(out.best.batch_size, 8);
        assert_eq!(out.best.learning_rate, 4.550325e-4);
        assert_eq!(out.best.hidden_sizes, vec![32]);
        assert_eq!(out.best.dropout, 0.126450);
    }

    #[test]
    fn empty_space_rejected() {
        let (tr, va) = tiny_sets();
        let space = SearchSpace {
            hidden_sizes: vec![],
            ..SearchSpace::default()
        };
        assert!(matches!(
            random_search(&space, 1, 0, &template(), &tr, &va),
            Err(Error::Validation(_))
        ));
        assert!(random_search(&SearchSpace::default(), 0, 0, &template(), &tr, &va).is_err());
    }
}
