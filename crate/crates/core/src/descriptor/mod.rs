//! Descriptor storage, the VPRD interchange codec and the feature transforms
//! that feed both fusion and the selector network.

mod io;
mod manifest;
mod pca;

pub use io::{decode_descriptors, encode_descriptors, load_descriptors, save_descriptors};
pub use manifest::{DatasetManifest, TechniqueEntry};
pub use pca::{fit_pca, FeatureTransform, PcaProjection, MAX_EIGEN_DIMS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A VPR technique and its position within the experiment's technique set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TechniqueId {
    pub name: String,
    pub index: usize,
}

/// Ordered technique set with exactly one base technique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniqueSet {
    techniques: Vec<TechniqueId>,
    base: usize,
}

impl TechniqueSet {
    pub fn new<S: AsRef<str>>(names: &[S], base: &str) -> Result<Self> {
        let mut techniques = Vec::with_capacity(names.len());
        for (index, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(Error::validation("empty technique name"));
            }
            if techniques.iter().any(|t: &TechniqueId| t.name == name) {
                return Err(Error::validation(format!("duplicate technique `{name}`")));
            }
            techniques.push(TechniqueId {
                name: name.to_string(),
                index,
            });
        }
        let base = techniques
            .iter()
            .position(|t| t.name == base)
            .ok_or_else(|| Error::validation(format!("base technique `{base}` not in set")))?;
        Ok(Self { techniques, base })
    }

    pub fn base(&self) -> &TechniqueId {
        &self.techniques[self.base]
    }

    pub fn all(&self) -> &[TechniqueId] {
        &self.techniques
    }

    /// Candidate techniques, i.e. every technique except the base, in set order.
    pub fn candidates(&self) -> impl Iterator<Item = &TechniqueId> {
        let base = self.base;
        self.techniques.iter().filter(move |t| t.index != base)
    }

    pub fn candidate_names(&self) -> Vec<String> {
        self.candidates().map(|t| t.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&TechniqueId> {
        self.techniques.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collection {
    Query,
    Reference,
}

impl Collection {
    pub(crate) fn flag(self) -> u8 {
        match self {
            Collection::Query => 0,
            Collection::Reference => 1,
        }
    }

    pub(crate) fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Collection::Query),
            1 => Some(Collection::Reference),
            _ => None,
        }
    }
}

/// Row-major matrix of per-image descriptors for one technique over one
/// image collection.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    technique: String,
    collection: Collection,
    dims: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(
        technique: impl Into<String>,
        collection: Collection,
        dims: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let technique = technique.into();
        if dims == 0 {
            return Err(Error::validation("descriptor dims must be positive"));
        }
        if data.is_empty() {
            return Err(Error::validation("descriptor set must contain at least one row"));
        }
        if !data.len().is_multiple_of(dims) {
            return Err(Error::validation(format!(
                "payload of {} values is not a multiple of dims {dims}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self {
            technique,
            collection,
            dims,
            data,
        })
    }

    pub fn from_rows(
        technique: impl Into<String>,
        collection: Collection,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::validation("ragged descriptor rows"));
        }
        Self::new(technique, collection, dims, rows.concat())
    }

    pub fn technique(&self) -> &str {
        &self.technique
    }

    pub fn collection(&self) -> Collection {
        self.collection
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims)
    }
}

/// Euclidean norm accumulated in 64-bit.
pub(crate) fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(set: &DescriptorSet) -> Result<DescriptorSet> {
    let mut data = Vec::with_capacity(set.data.len());
    for (i, row) in set.rows().enumerate() {
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::DegenerateDescriptor { row: i });
        }
        data.extend(row.iter().map(|&x| (f64::from(x) / n) as f32));
    }
    DescriptorSet::new(set.technique.clone(), set.collection, set.dims, data)
}

/// Elementwise `q - r`, the base-technique difference vector.
pub fn difference_vector(q: &[f32], r: &[f32]) -> Result<Vec<f64>> {
    if q.len() != r.len() {
        return Err(Error::validation(format!(
            "difference vector length mismatch: {} vs {}",
            q.len(),
            r.len()
        )));
    }
    Ok(q.iter()
        .zip(r)
        .map(|(&a, &b)| f64::from(a) - f64::from(b))
        .collect())
}
