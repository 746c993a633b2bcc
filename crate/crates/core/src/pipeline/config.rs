use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{MlpConfig, Optimizer, SearchSpace};
use crate::descriptor::DatasetManifest;
use crate::error::{Error, Result};
use crate::labeling::SplitSpec;

/// A dataset entry: a bare manifest path, or a manifest plus a holdout flag.
/// Holdout datasets contribute only test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Path(PathBuf),
    Entry {
        manifest: PathBuf,
        #[serde(default)]
        holdout: bool,
    },
}

impl DatasetRef {
    pub fn manifest(&self) -> &Path {
        match self {
            DatasetRef::Path(p) => p,
            DatasetRef::Entry { manifest, .. } => manifest,
        }
    }

    pub fn holdout(&self) -> bool {
        matches!(self, DatasetRef::Entry { holdout: true, .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMode {
    /// Pass descriptors through when they have at most `pca_k` dims, fit otherwise.
    #[default]
    Auto,
    Fit,
    PassThrough,
}

/// Selector settings that replace the tuned defaults when present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
}

impl MlpOverrides {
    pub fn apply(&self, cfg: &mut MlpConfig) {
        if let Some(h) = &self.hidden_sizes {
            cfg.hidden_sizes = h.clone();
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub budget: usize,
    #[serde(default)]
    pub space: SearchSpace,
}

fn default_k() -> usize {
    128
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetRef>,
    /// Defaults to the first manifest's base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    /// Defaults to every non-base technique of the first manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default = "default_k")]
    pub pca_k: usize,
    #[serde(default)]
    pub pca_mode: PcaMode,
    #[serde(default)]
    pub mlp: MlpOverrides,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub evaluate_unpruned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
}

impl ExperimentConfig {
    /// Parses a config file; relative paths inside it become relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let root = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            let p = match d {
                DatasetRef::Path(p) => p,
                DatasetRef::Entry { manifest, .. } => manifest,
            };
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = root.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn sha256(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Checks the config and loads its manifests.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.datasets.is_empty() {
            return Err(Error::validation("config lists no datasets"));
        }
        if self.pca_k == 0 {
            return Err(Error::validation("pca_k must be positive"));
        }
        self.split.validate()?;
        let mut manifests = Vec::with_capacity(self.datasets.len());
        for d in &self.datasets {
            if !d.manifest().is_file() {
                return Err(Error::validation(format!(
                    "manifest {} does not exist",
                    d.manifest().display()
                )));
            }
            let m = DatasetManifest::load(d.manifest())?;
            if m.dataset.contains(['/', '\\']) || m.dataset.starts_with('.') {
                return Err(Error::validation(format!(
                    "dataset name `{}` cannot be used as a file name",
                    m.dataset
                )));
            }
            if manifests.iter().any(|(o, _): &(DatasetManifest, bool)| o.dataset == m.dataset) {
                return Err(Error::validation(format!("dataset `{}` listed twice", m.dataset)));
            }
            manifests.push((m, d.holdout()));
        }
        if manifests.iter().all(|(_, h)| *h) {
            return Err(Error::validation("every dataset is held out; nothing to train on"));
        }
        let first = &manifests[0].0;
        let base = self.base.clone().unwrap_or_else(|| first.base.clone());
        let candidates = match &self.candidates {
            Some(c) => c.clone(),
            None => first
                .techniques
                .iter()
                .map(|t| t.name.clone())
                .filter(|n| *n != base)
                .collect(),
        };
        if candidates.is_empty() {
            return Err(Error::validation("no candidate techniques"));
        }
        if candidates.contains(&base) {
            return Err(Error::validation(format!(
                "base `{base}` cannot also be a candidate"
            )));
        }
        for name in std::iter::once(&base).chain(&candidates) {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::validation(format!(
                    "technique name `{name}` cannot be used as a file name"
                )));
            }
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(Error::validation(format!("candidate `{c}` listed twice")));
            }
        }
        for (m, _) in &manifests {
            for name in std::iter::once(&base).chain(&candidates) {
                let entry = m.technique(name).ok_or_else(|| {
                    Error::validation(format!("dataset `{}` lacks technique `{name}`", m.dataset))
                })?;
                for p in [&entry.query, &entry.reference] {
                    let p = m.resolve(p);
                    if !p.is_file() {
                        return Err(Error::validation(format!(
                            "descriptor file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
            let gt = m.resolve(&m.ground_truth);
            if !gt.is_file() {
                return Err(Error::validation(format!(
                    "ground-truth file {} does not exist",
                    gt.display()
                )));
            }
        }
        Ok(Resolved {
            manifests,
            base,
            candidates,
        })
    }
}

/// Config after manifest loading and technique resolution.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// Manifest and holdout flag, in config order.
    pub manifests: Vec<(DatasetManifest, bool)>,
    pub base: String,
    pub candidates: Vec<String>,
}
