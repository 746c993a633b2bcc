//! Multi-hot complementarity labels: a candidate is positive for a query when
//! fusing it with the base technique puts the top match inside the
//! ground-truth tolerance.

mod ground_truth;
mod split;

pub use ground_truth::{GroundTruth, GroundTruthFile};
pub use split::{combine_datasets, split_dataset, DatasetSplits, SplitSpec};

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::descriptor::TechniqueId;
use crate::error::{Error, Result};
use crate::fusion::{fuse_pair, SimilarityMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    /// Index of the query within its dataset.
    pub query_id: usize,
    pub dataset_tag: String,
    pub labels: Vec<bool>,
}

impl LabelRow {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Binary query x candidate matrix with a recorded column ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiHotLabelSet {
    techniques: Vec<String>,
    rows: Vec<LabelRow>,
}

impl MultiHotLabelSet {
    pub fn new(techniques: Vec<String>, rows: Vec<LabelRow>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.labels.len() != techniques.len()) {
            return Err(Error::validation(format!(
                "query {} has {} labels for {} techniques",
                r.query_id,
                r.labels.len(),
                techniques.len()
            )));
        }
        Ok(Self { techniques, rows })
    }

    pub fn techniques(&self) -> &[String] {
        &self.techniques
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn technique_index(&self, name: &str) -> Option<usize> {
        self.techniques.iter().position(|t| t == name)
    }

    /// Distinct dataset tags in first-appearance order.
    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for r in &self.rows {
            if !tags.contains(&r.dataset_tag) {
                tags.push(r.dataset_tag.clone());
            }
        }
        tags
    }

    pub fn filter_tag(&self, tag: &str) -> Self {
        Self {
            techniques: self.techniques.clone(),
            rows: self.rows.iter().filter(|r| r.dataset_tag == tag).cloned().collect(),
        }
    }

    pub(crate) fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            techniques: self.techniques.clone(),
            rows: self.rows[range].to_vec(),
        }
    }

    pub(crate) fn concat(parts: &[&MultiHotLabelSet]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::validation("nothing to concatenate"))?;
        let mut rows = Vec::new();
        for p in parts {
            if p.techniques != first.techniques {
                return Err(Error::validation(format!(
                    "technique ordering {:?} differs from {:?}",
                    p.techniques, first.techniques
                )));
            }
            rows.extend(p.rows.iter().cloned());
        }
        Ok(Self {
            techniques: first.techniques.clone(),
            rows,
        })
    }

    /// Fraction of rows where each candidate is positive.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.techniques.len())
            .map(|j| self.rows.iter().filter(|r| r.labels[j]).count() as f64 / n)
            .collect()
    }

    /// Drops rows without any positive label; returns how many were removed.
    pub fn prune(&mut self) -> usize {
        let before = self.rows.len();
        self.rows.retain(|r| r.positives() > 0);
        before - self.rows.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["query_id".to_string(), "dataset_tag".to_string()];
        header.extend(self.techniques.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.query_id.to_string(), r.dataset_tag.clone()];
            rec.extend(r.labels.iter().map(|&l| if l { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "query_id" || &header[1] != "dataset_tag" {
            return Err(Error::Format(format!(
                "{}: label header must start with query_id,dataset_tag",
                path.display()
            )));
        }
        let techniques: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let query_id = rec[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad query_id `{}`", &rec[0])))?;
            let labels = rec
                .iter()
                .skip(2)
                .map(|v| match v {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Format(format!("label must be 0 or 1, got `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(LabelRow {
                query_id,
                dataset_tag: rec[1].to_string(),
                labels,
            });
        }
        Self::new(techniques, rows)
    }
}

/// Counts and diagnostics from label construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelStats {
    pub total: usize,
    pub removed: usize,
    pub diagnostics: Vec<String>,
}

/// Whether fusing `other_sims` with `base_sims` localizes `query`.
pub fn pair_success(
    base_sims: &SimilarityMatrix,
    other_sims: &SimilarityMatrix,
    query: usize,
    gt: &GroundTruth,
) -> Result<bool> {
    if query >= gt.queries() {
        return Err(Error::validation(format!("query {query} has no ground truth")));
    }
    let fused = fuse_pair(base_sims, other_sims, query)?;
    Ok(gt.is_acceptable(query, fused.match_index))
}

fn check_shapes(all_sims: &[SimilarityMatrix], gt: &GroundTruth) -> Result<()> {
    let first = all_sims
        .first()
        .ok_or_else(|| Error::validation("no similarity matrices"))?;
    for m in all_sims {
        if m.queries() != first.queries() || m.refs() != first.refs() {
            return Err(Error::validation(format!(
                "`{}` is {}x{} but `{}` is {}x{}",
                m.technique(),
                m.queries(),
                m.refs(),
                first.technique(),
                first.queries(),
                first.refs()
            )));
        }
    }
    if gt.queries() != first.queries() || gt.refs() != first.refs() {
        return Err(Error::validation(format!(
            "ground truth covers {} queries over {} references, similarities are {}x{}",
            gt.queries(),
            gt.refs(),
            first.queries(),
            first.refs()
        )));
    }
    Ok(())
}

/// Label matrix over every query, without pruning. `all_sims[i]` belongs to
/// the technique with index `i`; candidate columns follow that order with the
/// base removed. A degenerate similarity row yields label 0 and a diagnostic.
pub fn build_label_matrix(
    all_sims: &[SimilarityMatrix],
    gt: &GroundTruth,
    base: &TechniqueId,
    dataset_tag: &str,
) -> Result<(MultiHotLabelSet, Vec<String>)> {
    check_shapes(all_sims, gt)?;
    let base_sims = all_sims
        .get(base.index)
        .ok_or_else(|| Error::validation(format!("no similarities for base `{}`", base.name)))?;
    let candidates: Vec<&SimilarityMatrix> = all_sims
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != base.index)
        .map(|(_, m)| m)
        .collect();

    let cells: Vec<(Vec<bool>, Vec<String>)> = (0..base_sims.queries())
        .into_par_iter()
        .map(|q| {
            let mut labels = Vec::with_capacity(candidates.len());
            let mut diags = Vec::new();
            for other in &candidates {
                match pair_success(base_sims, other, q, gt) {
                    Ok(ok) => labels.push(ok),
                    Err(e @ Error::DegenerateSimilarity { .. }) => {
                        diags.push(format!("{dataset_tag} query {q} with `{}`: {e}", other.technique()));
                        labels.push(false);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((labels, diags))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cells.len());
    let mut diagnostics = Vec::new();
    for (q, (labels, diags)) in cells.into_iter().enumerate() {
        for d in &diags {
            warn!("{d}");
        }
        diagnostics.extend(diags);
        rows.push(LabelRow {
            query_id: q,
            dataset_tag: dataset_tag.to_string(),
            labels,
        });
    }
    let names = candidates.iter().map(|m| m.technique().to_string()).collect();
    Ok((MultiHotLabelSet::new(names, rows)?, diagnostics))
}

/// Builds labels and removes queries that no candidate pair localizes.
pub fn build_labels(
    all_sims: &[SimilarityMatrix],
    gt: &GroundTruth,
    base: &TechniqueId,
    dataset_tag: &str,
) -> Result<(MultiHotLabelSet, LabelStats)> {
    let (mut labels, diagnostics) = build_label_matrix(all_sims, gt, base, dataset_tag)?;
    let total = labels.len();
    let removed = labels.prune();
    Ok((
        labels,
        LabelStats {
            total,
            removed,
            diagnostics,
        },
    ))
}
