//! PCA fitted on difference vectors, plus the pass-through alternative used
//! when descriptors are already no wider than the target dimensionality.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::blob;
use crate::error::{Error, Result};

/// Largest input width handled by the dense covariance eigendecomposition.
pub const MAX_EIGEN_DIMS: usize = 4096;

const EIGEN_TOLERANCE: f64 = 1e-9;
const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    mean: Vec<f64>,
    /// k x dims, row-major, orthonormal rows.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    k: usize,
    dims: usize,
}

impl PcaProjection {
    /// Builds a projection from explicit parts, checking orthonormality.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        explained_variance: Vec<f64>,
        k: usize,
    ) -> Result<Self> {
        let dims = mean.len();
        if k == 0 || k > dims {
            return Err(Error::validation(format!("k={k} must be in 1..={dims}")));
        }
        if components.len() != k * dims || explained_variance.len() != k {
            return Err(Error::validation("PCA component shapes do not match k x dims"));
        }
        let p = Self {
            mean,
            components,
            explained_variance,
            k,
            dims,
        };
        for i in 0..k {
            for j in i..k {
                let dot: f64 = p
                    .component(i)
                    .iter()
                    .zip(p.component(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() >= ORTHONORMAL_TOLERANCE {
                    return Err(Error::validation(format!(
                        "components {i} and {j} are not orthonormal (dot={dot})"
                    )));
                }
            }
        }
        Ok(p)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dims..(i + 1) * self.dims]
    }

    /// Covariance eigenvalue behind each component, descending.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// `components * (v - mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dims {
            return Err(Error::validation(format!(
                "projection expects {} dims, got {}",
                self.dims,
                v.len()
            )));
        }
        Ok((0..self.k)
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(c, (x, m))| c * (x - m))
                    .sum()
            })
            .collect())
    }
}

/// Fits the top-`k` principal components of `rows`.
///
/// Components are eigenvectors of the sample covariance (n - 1 denominator),
/// ordered by descending eigenvalue, each signed so that its largest-magnitude
/// entry is positive.
pub fn fit_pca(rows: &[Vec<f64>], k: usize) -> Result<PcaProjection> {
    let n = rows.len();
    let dims = rows.first().map_or(0, Vec::len);
    if dims == 0 {
        return Err(Error::validation("PCA needs at least one non-empty sample"));
    }
    if rows.iter().any(|r| r.len() != dims) {
        return Err(Error::validation("ragged PCA training rows"));
    }
    if k == 0 || k > dims || k > n {
        return Err(Error::validation(format!(
            "k={k} must satisfy 1 <= k <= dims ({dims}) and k <= samples ({n})"
        )));
    }
    if dims > MAX_EIGEN_DIMS {
        return Err(Error::validation(format!(
            "PCA input has {dims} dims, above the supported {MAX_EIGEN_DIMS}"
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite PCA training value".into()));
    }

    let mut mean = vec![0.0; dims];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, dims, |i, j| rows[i][j] - mean[j]);
    let denom = (n.max(2) - 1) as f64;
    let mut cov = centered.tr_mul(&centered) / denom;
    // Exact symmetry for the symmetric solver.
    for i in 0..dims {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::try_new(cov, EIGEN_TOLERANCE, 0)
        .ok_or_else(|| Error::Data("covariance eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k * dims);
    let mut explained_variance = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let v = eig.eigenvectors.column(col);
        let norm = v.norm();
        let mut pivot = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| sign * x / norm));
        explained_variance.push(eig.eigenvalues[col]);
    }

    PcaProjection::from_parts(mean, components, explained_variance, k)
}

/// The input transform applied to difference vectors before the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTransform {
    PassThrough { dims: usize },
    Pca(PcaProjection),
}

impl FeatureTransform {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureTransform::PassThrough { dims } => *dims,
            FeatureTransform::Pca(p) => p.dims(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureTransform::PassThrough { dims } => *dims,
            FeatureTransform::Pca(p) => p.k(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureTransform::PassThrough { dims } => {
                if v.len() != *dims {
                    return Err(Error::validation(format!(
                        "feature expects {dims} dims, got {}",
                        v.len()
                    )));
                }
                Ok(v.to_vec())
            }
            FeatureTransform::Pca(p) => p.project(v),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = match self {
            FeatureTransform::PassThrough { dims } => TransformFile {
                mode: "pass_through".into(),
                dims: *dims,
                k: *dims,
                mean: None,
                components: None,
                explained_variance: None,
            },
            FeatureTransform::Pca(p) => TransformFile {
                mode: "pca".into(),
                dims: p.dims,
                k: p.k,
                mean: Some(blob::encode_f64(&p.mean)),
                components: Some(blob::encode_f64(&p.components)),
                explained_variance: Some(blob::encode_f64(&p.explained_variance)),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TransformFile = serde_json::from_str(text)?;
        match file.mode.as_str() {
            "pass_through" => Ok(FeatureTransform::PassThrough { dims: file.dims }),
            "pca" => {
                let missing = || Error::Format("PCA transform file lacks a blob".into());
                let mean = blob::decode_f64(file.mean.as_deref().ok_or_else(missing)?, file.dims)?;
                let components = blob::decode_f64(
                    file.components.as_deref().ok_or_else(missing)?,
                    file.k * file.dims,
                )?;
                let ev = blob::decode_f64(
                    file.explained_variance.as_deref().ok_or_else(missing)?,
                    file.k,
                )?;
                Ok(FeatureTransform::Pca(PcaProjection::from_parts(
                    mean, components, ev, file.k,
                )?))
            }
            other => Err(Error::Format(format!("unknown transform mode `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TransformFile {
    mode: String,
    dims: usize,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    components: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explained_variance: Option<String>,
}
