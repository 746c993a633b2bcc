use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth file contents, before resolution against a reference count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GroundTruthFile {
    /// Sequential route data: query `q` matches reference `map[q]`, and
    /// anything within `tolerance` frames of it is accepted.
    Traversal {
        map: Vec<usize>,
        #[serde(default)]
        tolerance: usize,
    },
    /// Explicit acceptable reference indices per query.
    Explicit { accept: Vec<Vec<usize>> },
}

impl GroundTruthFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Resolves into acceptable sets over `refs` references.
    /// `tolerance_override` replaces a traversal file's own tolerance.
    pub fn resolve(&self, refs: usize, tolerance_override: Option<usize>) -> Result<GroundTruth> {
        match self {
            GroundTruthFile::Traversal { map, tolerance } => {
                GroundTruth::traversal(map, tolerance_override.unwrap_or(*tolerance), refs)
            }
            GroundTruthFile::Explicit { accept } => GroundTruth::explicit(accept.clone(), refs),
        }
    }
}

/// Per-query acceptable reference indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    accept: Vec<Vec<usize>>,
    /// The reference used for training-time difference vectors.
    primary: Vec<usize>,
    refs: usize,
}

impl GroundTruth {
    pub fn traversal(map: &[usize], tolerance: usize, refs: usize) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::validation("ground truth has no queries"));
        }
        let mut accept = Vec::with_capacity(map.len());
        for (q, &g) in map.iter().enumerate() {
            if g >= refs {
                return Err(Error::validation(format!(
                    "query {q}: ground-truth index {g} outside [0, {refs})"
                )));
            }
            let lo = g.saturating_sub(tolerance);
            let hi = (g + tolerance).min(refs - 1);
            accept.push((lo..=hi).collect());
        }
        Ok(Self {
            accept,
            primary: map.to_vec(),
            refs,
        })
    }

    pub fn explicit(accept: Vec<Vec<usize>>, refs: usize) -> Result<Self> {
        if accept.is_empty() {
            return Err(Error::validation("ground truth has no queries"));
        }
        let mut primary = Vec::with_capacity(accept.len());
        let mut sets = Vec::with_capacity(accept.len());
        for (q, list) in accept.into_iter().enumerate() {
            let first = *list
                .first()
                .ok_or_else(|| Error::validation(format!("query {q} has no acceptable reference")))?;
            if let Some(bad) = list.iter().find(|&&i| i >= refs) {
                return Err(Error::validation(format!(
                    "query {q}: acceptable index {bad} outside [0, {refs})"
                )));
            }
            let mut list = list;
            list.sort_unstable();
            list.dedup();
            primary.push(first);
            sets.push(list);
        }
        Ok(Self {
            accept: sets,
            primary,
            refs,
        })
    }

    pub fn queries(&self) -> usize {
        self.accept.len()
    }

    pub fn refs(&self) -> usize {
        self.refs
    }

    pub fn acceptable(&self, q: usize) -> &[usize] {
        &self.accept[q]
    }

    pub fn is_acceptable(&self, q: usize, reference: usize) -> bool {
        self.accept[q].binary_search(&reference).is_ok()
    }

    pub fn primary(&self, q: usize) -> usize {
        self.primary[q]
    }
}
