use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Metric;

/// Per-technique descriptor files of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueEntry {
    pub name: String,
    pub query: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub metric: Metric,
}

/// Dataset manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub techniques: Vec<TechniqueEntry>,
    pub base: String,
    pub ground_truth: PathBuf,
    /// Frame tolerance; overrides the tolerance stored in a traversal
    /// ground-truth file when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<usize>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(
        dataset: impl Into<String>,
        techniques: Vec<TechniqueEntry>,
        base: impl Into<String>,
        ground_truth: impl Into<PathBuf>,
        tolerance: Option<usize>,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            techniques,
            base: base.into(),
            ground_truth: ground_truth.into(),
            tolerance,
            root: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::validation("manifest dataset name is empty"));
        }
        let names: Vec<&str> = self.techniques.iter().map(|t| t.name.as_str()).collect();
        crate::descriptor::TechniqueSet::new(&names, &self.base)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn technique(&self, name: &str) -> Option<&TechniqueEntry> {
        self.techniques.iter().find(|t| t.name == name)
    }
}
