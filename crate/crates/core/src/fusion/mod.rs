//! Multi-process fusion: per-technique similarity vectors are min-max
//! normalized to [0, 1], summed with equal weight, and the argmax of the sum
//! is the place match.

mod cache;

pub use cache::{decode_similarity, encode_similarity, load_similarity, save_similarity};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{l2_normalize, DescriptorSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Dot product of L2-normalized descriptors.
    #[default]
    Cosine,
    /// Negated Euclidean distance.
    NegEuclidean,
}

/// Query x reference similarity scores of one technique. Row `q` is the
/// similarity vector of query `q` over the whole reference database.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    technique: String,
    metric: Metric,
    queries: usize,
    refs: usize,
    scores: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(
        technique: impl Into<String>,
        metric: Metric,
        queries: usize,
        refs: usize,
        scores: Vec<f64>,
    ) -> Result<Self> {
        if queries == 0 || refs == 0 {
            return Err(Error::validation("similarity matrix needs Q >= 1 and D >= 1"));
        }
        if scores.len() != queries * refs {
            return Err(Error::validation(format!(
                "similarity payload has {} entries, expected {queries} x {refs}",
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("non-finite similarity score".into()));
        }
        Ok(Self {
            technique: technique.into(),
            metric,
            queries,
            refs,
            scores,
        })
    }

    pub fn from_rows(technique: impl Into<String>, metric: Metric, rows: &[Vec<f64>]) -> Result<Self> {
        let refs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != refs) {
            return Err(Error::validation("ragged similarity rows"));
        }
        Self::new(technique, metric, rows.len(), refs, rows.concat())
    }

    pub fn technique(&self) -> &str {
        &self.technique
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn refs(&self) -> usize {
        self.refs
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.scores[q * self.refs..(q + 1) * self.refs]
    }

    /// Applies `f` to every score, keeping technique and metric.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.technique.clone(),
            self.metric,
            self.queries,
            self.refs,
            self.scores.iter().map(|&s| f(s)).collect(),
        )
    }

    /// Index of the best reference for query `q` under this technique alone.
    pub fn top_match(&self, q: usize) -> usize {
        argmax(self.row(q))
    }
}

/// Fused score vector and its argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedResult {
    pub fused_scores: Vec<f64>,
    pub match_index: usize,
}

/// Argmax with lowest-index tie-break. Empty input yields 0.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn neg_euclidean(a: &[f32], b: &[f32]) -> f64 {
    -a.iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn unit(v: &[f32]) -> Result<Vec<f32>> {
    let n = crate::descriptor::norm(v);
    if n == 0.0 {
        return Err(Error::DegenerateDescriptor { row: 0 });
    }
    Ok(v.iter().map(|&x| (f64::from(x) / n) as f32).collect())
}

/// Scores one query descriptor against every reference descriptor.
pub fn similarity_vector(query_row: &[f32], refs: &DescriptorSet, metric: Metric) -> Result<Vec<f64>> {
    if query_row.len() != refs.dims() {
        return Err(Error::validation(format!(
            "query has {} dims, references have {}",
            query_row.len(),
            refs.dims()
        )));
    }
    match metric {
        Metric::Cosine => {
            let q = unit(query_row)?;
            let refs = l2_normalize(refs)?;
            Ok(refs.rows().map(|r| dot(&q, r)).collect())
        }
        Metric::NegEuclidean => Ok(refs.rows().map(|r| neg_euclidean(query_row, r)).collect()),
    }
}

/// Full similarity matrix. Scores are accumulated in 64-bit and rounded to
/// 32-bit precision so that a cached matrix reloads to identical values.
pub fn similarity_matrix(
    queries: &DescriptorSet,
    refs: &DescriptorSet,
    metric: Metric,
) -> Result<SimilarityMatrix> {
    if queries.dims() != refs.dims() {
        return Err(Error::validation(format!(
            "query dims {} differ from reference dims {}",
            queries.dims(),
            refs.dims()
        )));
    }
    let (queries_n, refs_n) = match metric {
        Metric::Cosine => (l2_normalize(queries)?, l2_normalize(refs)?),
        Metric::NegEuclidean => (queries.clone(), refs.clone()),
    };
    let rows: Vec<Vec<f64>> = (0..queries_n.count())
        .into_par_iter()
        .map(|q| {
            let qrow = queries_n.row(q);
            refs_n
                .rows()
                .map(|r| {
                    let s = match metric {
                        Metric::Cosine => dot(qrow, r),
                        Metric::NegEuclidean => neg_euclidean(qrow, r),
                    };
                    f64::from(s as f32)
                })
                .collect()
        })
        .collect();
    SimilarityMatrix::new(
        queries.technique(),
        metric,
        queries.count(),
        refs.count(),
        rows.concat(),
    )
}

/// Min-max normalization onto [0, 1].
pub fn min_max_normalize(s: &[f64]) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::validation("min-max normalization needs at least 2 scores"));
    }
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi <= lo {
        return Err(Error::DegenerateSimilarity {
            technique: String::new(),
        });
    }
    let range = hi - lo;
    Ok(s.iter().map(|&x| (x - lo) / range).collect())
}

/// Sums normalized score vectors and takes the argmax.
pub fn mpf_fuse(vectors: &[Vec<f64>]) -> Result<FusedResult> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::validation("nothing to fuse"))?;
    if vectors.iter().any(|v| v.len() != first.len()) {
        return Err(Error::validation("ragged score vectors"));
    }
    let mut fused_scores = vec![0.0; first.len()];
    for v in vectors {
        for (acc, x) in fused_scores.iter_mut().zip(v) {
            *acc += x;
        }
    }
    let match_index = argmax(&fused_scores);
    Ok(FusedResult {
        fused_scores,
        match_index,
    })
}

fn normalize_row(m: &SimilarityMatrix, q: usize) -> Result<Vec<f64>> {
    min_max_normalize(m.row(q)).map_err(|e| match e {
        Error::DegenerateSimilarity { .. } => Error::DegenerateSimilarity {
            technique: m.technique.clone(),
        },
        other => other,
    })
}

/// Fuses the base technique with one other technique for query `query`.
pub fn fuse_pair(
    base_sims: &SimilarityMatrix,
    other_sims: &SimilarityMatrix,
    query: usize,
) -> Result<FusedResult> {
    if base_sims.refs != other_sims.refs {
        return Err(Error::validation(format!(
            "`{}` scores {} references but `{}` scores {}",
            base_sims.technique, base_sims.refs, other_sims.technique, other_sims.refs
        )));
    }
    if query >= base_sims.queries || query >= other_sims.queries {
        return Err(Error::validation(format!("query index {query} out of range")));
    }
    let base = normalize_row(base_sims, query)?;
    let other = normalize_row(other_sims, query)?;
    mpf_fuse(&[base, other])
}
