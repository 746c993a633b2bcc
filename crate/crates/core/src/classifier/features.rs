use crate::error::{Error, Result};

/// How the reference half of a difference vector was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Query minus its ground-truth reference (base technique descriptors).
    Training,
    /// Query minus the base technique's top-retrieved reference.
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    /// Multi-hot targets; may be empty for unlabeled inference rows.
    pub targets: Vec<f64>,
}

/// Examples that all share one [`FeatureMode`] and one feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    mode: FeatureMode,
    examples: Vec<TrainingExample>,
}

impl FeatureBatch {
    pub fn new(mode: FeatureMode) -> Self {
        Self {
            mode,
            examples: Vec::new(),
        }
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn examples(&self) -> &[TrainingExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.features.len())
    }

    /// Appends an example built under `mode`; a batch never mixes modes.
    pub fn push(&mut self, example: TrainingExample, mode: FeatureMode) -> Result<()> {
        if mode != self.mode {
            return Err(Error::validation(format!(
                "{mode:?} feature pushed into a {:?} batch",
                self.mode
            )));
        }
        if let Some(dim) = self.dim() {
            if example.features.len() != dim {
                return Err(Error::validation(format!(
                    "feature width {} differs from batch width {dim}",
                    example.features.len()
                )));
            }
        }
        if example.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        if mode == FeatureMode::Training {
            if example.targets.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(Error::validation("training targets must be 0 or 1"));
            }
            if !example.targets.contains(&1.0) {
                return Err(Error::validation("training example without a positive target"));
            }
        }
        if let Some(first) = self.examples.first() {
            if first.targets.len() != example.targets.len() {
                return Err(Error::validation("target width differs within batch"));
            }
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn expect_mode(&self, mode: FeatureMode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::validation(format!(
                "expected {mode:?} features, got a {:?} batch",
                self.mode
            )));
        }
        Ok(())
    }
}
