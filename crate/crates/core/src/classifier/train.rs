//! Seeded mini-batch training; keeps the epoch with the lowest validation BCE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Gradients, MlpModel, Mode};
use super::{bce_loss, FeatureBatch, FeatureMode, MlpConfig, Optimizer};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_bce: f64,
    pub val_bce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn best_val_bce(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_bce
    }
}

enum Stepper {
    Adam {
        t: i32,
        m: Gradients,
        v: Gradients,
    },
    Sgd,
}

impl Stepper {
    fn new(optimizer: Optimizer, model: &MlpModel) -> Self {
        match optimizer {
            Optimizer::Adam => Stepper::Adam {
                t: 0,
                m: Gradients::zeros_like(model),
                v: Gradients::zeros_like(model),
            },
            Optimizer::Sgd => Stepper::Sgd,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        let layers = model.layers_mut();
        match self {
            Stepper::Sgd => {
                for (l, layer) in layers.iter_mut().enumerate() {
                    for (p, g) in layer.weights_mut().iter_mut().zip(&grads.weights[l]) {
                        *p -= lr * g;
                    }
                    for (p, g) in layer.biases_mut().iter_mut().zip(&grads.biases[l]) {
                        *p -= lr * g;
                    }
                }
            }
            Stepper::Adam { t, m, v } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                };
                for (l, layer) in layers.iter_mut().enumerate() {
                    for (i, p) in layer.weights_mut().iter_mut().enumerate() {
                        update(p, grads.weights[l][i], &mut m.weights[l][i], &mut v.weights[l][i]);
                    }
                    for (i, p) in layer.biases_mut().iter_mut().enumerate() {
                        update(p, grads.biases[l][i], &mut m.biases[l][i], &mut v.biases[l][i]);
                    }
                }
            }
        }
    }
}

fn check_batch(batch: &FeatureBatch, config: &MlpConfig, what: &str) -> Result<()> {
    batch.expect_mode(FeatureMode::Training)?;
    if batch.is_empty() {
        return Err(Error::validation(format!("{what} set is empty")));
    }
    if batch.dim() != Some(config.input_dim) {
        return Err(Error::validation(format!(
            "{what} features have width {:?}, model expects {}",
            batch.dim(),
            config.input_dim
        )));
    }
    if batch.examples()[0].targets.len() != config.output_dim {
        return Err(Error::validation(format!(
            "{what} targets have width {}, model expects {}",
            batch.examples()[0].targets.len(),
            config.output_dim
        )));
    }
    Ok(())
}

/// Mean eval-mode BCE over a batch.
pub(crate) fn mean_loss(model: &MlpModel, batch: &FeatureBatch) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch.examples() {
        total += bce_loss(&model.likelihoods(&ex.features)?, &ex.targets)?;
    }
    Ok(total / batch.len() as f64)
}

pub fn train(
    config: &MlpConfig,
    train_set: &FeatureBatch,
    val_set: &FeatureBatch,
) -> Result<(MlpModel, History)> {
    config.validate()?;
    check_batch(train_set, config, "training")?;
    check_batch(val_set, config, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(config, &mut rng)?;
    let mut stepper = Stepper::new(config.optimizer, &model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MlpModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &i in chunk {
                let ex = &train_set.examples()[i];
                let cache = model.forward(&ex.features, Mode::Train, &mut rng)?;
                train_total += bce_loss(cache.likelihoods(), &ex.targets)?;
                grads.add_assign(&model.backward(&cache, &ex.targets)?);
            }
            grads.scale(1.0 / chunk.len() as f64);
            stepper.step(&mut model, &grads, config.learning_rate);
        }
        let train_bce = train_total / train_set.len() as f64;
        let val_bce = mean_loss(&model, val_set)?;
        if !train_bce.is_finite() || !val_bce.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if model
            .layers()
            .iter()
            .any(|l| l.weights().iter().chain(l.biases()).any(|p| !p.is_finite()))
        {
            return Err(Error::Divergence { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            train_bce,
            val_bce,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_bce < *b) {
            best = Some((val_bce, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        History {
            epochs,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{predict, TrainingExample};
    use rand::Rng;

    /// Features +-e0 plus noise; +e0 means candidate 0 localizes, -e0 candidate 1.
    fn separable(n: usize, seed: u64) -> FeatureBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = FeatureBatch::new(FeatureMode::Training);
        for i in 0..n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut f: Vec<f64> = (0..8).map(|_| rng.random_range(-0.1..0.1)).collect();
            f[0] += sign;
            let targets = if sign > 0.0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            b.push(TrainingExample { features: f, targets }, FeatureMode::Training)
                .unwrap();
        }
        b
    }

    fn cfg() -> MlpConfig {
        MlpConfig {
            seed: 5,
            ..MlpConfig::new(8, 2)
        }
    }

    #[test]
    fn learns_separable_set() {
        let train_set = separable(300, 1);
        let val_set = separable(60, 2);
        let test_set = separable(200, 3);
        let (model, history) = train(&cfg(), &train_set, &val_set).unwrap();
        assert_eq!(history.epochs.len(), 17);
        let correct = test_set
            .examples()
            .iter()
            .filter(|ex| {
                let k = predict(&model, &ex.features).unwrap();
                ex.targets[k] == 1.0
            })
            .count();
        assert!(correct as f64 / test_set.len() as f64 >= 0.95, "{correct}");
    }

    #[test]
    fn deterministic_replay() {
        let train_set = separable(50, 1);
        let val_set = separable(10, 2);
        let (a, ha) = train(&cfg(), &train_set, &val_set).unwrap();
        let (b, hb) = train(&cfg(), &train_set, &val_set).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(la.weights()), bits(lb.weights()));
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let train_set = separable(40, 1);
        let val_set = separable(10, 2);
        let c = MlpConfig {
            learning_rate: 0.0,
            epochs: 4,
            ..cfg()
        };
        let (model, history) = train(&c, &train_set, &val_set).unwrap();
        let init = MlpModel::seeded(&c).unwrap();
        assert_eq!(model.layers(), init.layers());
        let v0 = history.epochs[0].val_bce;
        assert!(history.epochs.iter().all(|e| e.val_bce == v0));
    }

    #[test]
    fn sgd_also_learns() {
        let c = MlpConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.05,
            ..cfg()
        };
        let (_, history) = train(&c, &separable(200, 1), &separable(40, 2)).unwrap();
        assert!(history.best_val_bce() < history.epochs[0].train_bce);
    }

    #[test]
    fn empty_or_inference_sets_rejected() {
        let empty = FeatureBatch::new(FeatureMode::Training);
        assert!(matches!(train(&cfg(), &empty, &separable(5, 2)), Err(Error::Validation(_))));
        let infer = FeatureBatch::new(FeatureMode::Inference);
        assert!(train(&cfg(), &separable(5, 1), &infer).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let c = MlpConfig {
            learning_rate: 1e300,
            optimizer: Optimizer::Sgd,
            dropout: 0.0,
            ..cfg()
        };
        assert!(matches!(
            train(&c, &separable(40, 1), &separable(10, 2)),
            Err(Error::Divergence { .. })
        ));
    }
}
