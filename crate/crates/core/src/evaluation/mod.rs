//! Recall@1 for a selection strategy, the static-pair baselines, the oracle
//! upper bound and per-dataset selection distributions.

mod report;

pub use report::{write_per_query_csv, write_report_json, write_strip_svg};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict, FeatureBatch, FeatureMode, MlpModel};
use crate::error::{Error, Result};
use crate::fusion::{fuse_pair, SimilarityMatrix};
use crate::labeling::{GroundTruth, MultiHotLabelSet};

/// Similarities and ground truth for one dataset, candidates in label order.
#[derive(Debug, Clone)]
pub struct EvalDataset {
    pub tag: String,
    pub base: SimilarityMatrix,
    pub candidates: Vec<SimilarityMatrix>,
    pub gt: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: usize,
    pub dataset_tag: String,
    pub selected_technique: String,
    pub success: bool,
    /// `None` when fusion failed for this query.
    pub match_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnprunedSummary {
    pub queries: usize,
    pub recall_at_1: f64,
    pub oracle_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub strategy: String,
    pub techniques: Vec<String>,
    pub recall_at_1: f64,
    pub per_dataset_recall: BTreeMap<String, f64>,
    pub per_query: Vec<QueryRecord>,
    /// Selection counts per candidate, per dataset tag.
    pub selection_histogram: BTreeMap<String, Vec<usize>>,
    pub baseline_recalls: BTreeMap<String, f64>,
    pub oracle_recall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unpruned: Option<UnprunedSummary>,
    pub diagnostics: Vec<String>,
}

pub fn recall_at_1(successes: &[bool]) -> Result<f64> {
    if successes.is_empty() {
        return Err(Error::validation("Recall@1 over zero queries"));
    }
    Ok(successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64)
}

/// Fraction of rows with at least one positive label.
pub fn oracle_recall(labels: &MultiHotLabelSet) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::validation("oracle recall over zero queries"));
    }
    let hits: Vec<bool> = labels.rows().iter().map(|r| r.positives() > 0).collect();
    recall_at_1(&hits)
}

fn best_column(labels: &MultiHotLabelSet) -> usize {
    crate::fusion::argmax(&labels.column_means())
}

/// Candidate with the highest training success rate overall.
pub fn baseline_best_average(train_labels: &MultiHotLabelSet) -> Result<usize> {
    if train_labels.is_empty() || train_labels.techniques().is_empty() {
        return Err(Error::validation("no training labels for the best-average baseline"));
    }
    Ok(best_column(train_labels))
}

/// Candidate with the highest training success rate within one dataset.
pub fn baseline_dataset_specific(train_labels: &MultiHotLabelSet, dataset_tag: &str) -> Result<usize> {
    let subset = train_labels.filter_tag(dataset_tag);
    if subset.is_empty() {
        return Err(Error::validation(format!(
            "dataset `{dataset_tag}` has no training labels"
        )));
    }
    Ok(best_column(&subset))
}

/// Per-row dataset-specific choices; tags absent from training fall back to
/// the best-average pair.
pub fn dataset_specific_choices(
    train_labels: &MultiHotLabelSet,
    test: &MultiHotLabelSet,
) -> Result<Vec<usize>> {
    let fallback = baseline_best_average(train_labels)?;
    let mut per_tag = BTreeMap::new();
    for tag in train_labels.tags() {
        per_tag.insert(tag.clone(), baseline_dataset_specific(train_labels, &tag)?);
    }
    Ok(test
        .rows()
        .iter()
        .map(|r| per_tag.get(&r.dataset_tag).copied().unwrap_or(fallback))
        .collect())
}

/// Picks a positive candidate whenever one exists (first positive column).
pub fn oracle_choices(test: &MultiHotLabelSet) -> Vec<usize> {
    test.rows()
        .iter()
        .map(|r| r.labels.iter().position(|&l| l).unwrap_or(0))
        .collect()
}

/// Selector predictions over an inference-mode feature batch.
pub fn selector_choices(model: &MlpModel, features: &FeatureBatch) -> Result<Vec<usize>> {
    features.expect_mode(FeatureMode::Inference)?;
    features
        .examples()
        .iter()
        .map(|ex| predict(model, &ex.features))
        .collect()
}

/// Mean of `labels[q][choice(q)]`.
pub fn label_recall(test: &MultiHotLabelSet, choices: &[usize]) -> Result<f64> {
    if choices.len() != test.len() {
        return Err(Error::validation("one choice per test row required"));
    }
    let hits: Vec<bool> = test
        .rows()
        .iter()
        .zip(choices)
        .map(|(r, &c)| r.labels.get(c).copied().unwrap_or(false))
        .collect();
    recall_at_1(&hits)
}

fn dataset<'a>(datasets: &'a [EvalDataset], tag: &str, techniques: &[String]) -> Result<&'a EvalDataset> {
    let d = datasets
        .iter()
        .find(|d| d.tag == tag)
        .ok_or_else(|| Error::validation(format!("no similarities loaded for dataset `{tag}`")))?;
    let names: Vec<&str> = d.candidates.iter().map(SimilarityMatrix::technique).collect();
    if names != techniques.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::validation(format!(
            "dataset `{tag}` candidate ordering {names:?} differs from labels {techniques:?}"
        )));
    }
    Ok(d)
}

/// Fuses the base with each row's chosen candidate and scores the match
/// against ground truth. Fusion failures count as unsuccessful queries.
pub fn evaluate_choices(
    strategy: &str,
    choices: &[usize],
    test: &MultiHotLabelSet,
    datasets: &[EvalDataset],
) -> Result<EvaluationReport> {
    if choices.len() != test.len() {
        return Err(Error::validation(format!(
            "{} choices for {} test queries",
            choices.len(),
            test.len()
        )));
    }
    let techniques = test.techniques().to_vec();
    let mut per_query = Vec::with_capacity(test.len());
    let mut diagnostics = Vec::new();
    let mut histogram: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (row, &choice) in test.rows().iter().zip(choices) {
        let d = dataset(datasets, &row.dataset_tag, &techniques)?;
        let other = d.candidates.get(choice).ok_or_else(|| {
            Error::validation(format!("choice {choice} outside {} candidates", techniques.len()))
        })?;
        let (success, match_index) = match fuse_pair(&d.base, other, row.query_id) {
            Ok(f) => (d.gt.is_acceptable(row.query_id, f.match_index), Some(f.match_index)),
            Err(e @ (Error::DegenerateSimilarity { .. } | Error::Validation(_))) => {
                diagnostics.push(format!("{} query {}: {e}", row.dataset_tag, row.query_id));
                (false, None)
            }
            Err(e) => return Err(e),
        };
        histogram
            .entry(row.dataset_tag.clone())
            .or_insert_with(|| vec![0; techniques.len()])[choice] += 1;
        per_query.push(QueryRecord {
            query_id: row.query_id,
            dataset_tag: row.dataset_tag.clone(),
            selected_technique: techniques[choice].clone(),
            success,
            match_index,
        });
    }
    let successes: Vec<bool> = per_query.iter().map(|r| r.success).collect();
    let mut per_dataset_recall = BTreeMap::new();
    for tag in test.tags() {
        let s: Vec<bool> = per_query
            .iter()
            .filter(|r| r.dataset_tag == tag)
            .map(|r| r.success)
            .collect();
        per_dataset_recall.insert(tag, recall_at_1(&s)?);
    }
    Ok(EvaluationReport {
        strategy: strategy.to_string(),
        techniques,
        recall_at_1: recall_at_1(&successes)?,
        per_dataset_recall,
        per_query,
        selection_histogram: histogram,
        baseline_recalls: BTreeMap::new(),
        oracle_recall: oracle_recall(test)?,
        unpruned: None,
        diagnostics,
    })
}

/// Runs the selector over inference-mode features and scores it.
pub fn evaluate_selector(
    model: &MlpModel,
    features: &FeatureBatch,
    test: &MultiHotLabelSet,
    datasets: &[EvalDataset],
) -> Result<EvaluationReport> {
    let choices = selector_choices(model, features)?;
    evaluate_choices("selector", &choices, test, datasets)
}

/// Recall of every static strategy on the same test rows: best-average,
/// dataset-specific, and each single candidate pair.
pub fn baseline_recalls(
    train_labels: &MultiHotLabelSet,
    test: &MultiHotLabelSet,
    datasets: &[EvalDataset],
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    let best = baseline_best_average(train_labels)?;
    let n = test.len();
    out.insert(
        format!("best_average:{}", test.techniques()[best]),
        evaluate_choices("best_average", &vec![best; n], test, datasets)?.recall_at_1,
    );
    let specific = dataset_specific_choices(train_labels, test)?;
    out.insert(
        "dataset_specific".to_string(),
        evaluate_choices("dataset_specific", &specific, test, datasets)?.recall_at_1,
    );
    for (j, name) in test.techniques().iter().enumerate() {
        out.insert(
            format!("pair:{name}"),
            evaluate_choices(name, &vec![j; n], test, datasets)?.recall_at_1,
        );
    }
    Ok(out)
}

/// Normalized selection frequencies per dataset tag.
pub fn selection_distribution(report: &EvaluationReport) -> BTreeMap<String, Vec<f64>> {
    report
        .selection_histogram
        .iter()
        .map(|(tag, counts)| {
            let total: usize = counts.iter().sum();
            let dist = counts
                .iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect();
            (tag.clone(), dist)
        })
        .collect()
}
