use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PcaMode, Pipeline, Strategy};
use crate::classifier::{
    load_model, random_search, save_model, train, write_history, FeatureBatch, FeatureMode, MlpConfig,
    MlpModel, TrainingExample,
};
use crate::descriptor::{
    difference_vector, fit_pca, load_descriptors, Collection, DatasetManifest, DescriptorSet,
    FeatureTransform, TechniqueId,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    baseline_best_average, baseline_recalls, dataset_specific_choices, evaluate_choices, oracle_choices,
    oracle_recall, selector_choices, write_per_query_csv, write_report_json, write_strip_svg, EvalDataset,
    EvaluationReport, UnprunedSummary,
};
use crate::fusion::{load_similarity, save_similarity, similarity_matrix, SimilarityMatrix};
use crate::labeling::{
    build_label_matrix, combine_datasets, split_dataset, DatasetSplits, GroundTruth, GroundTruthFile,
    LabelRow, MultiHotLabelSet,
};

const SIMILARITY: &str = "similarity";
const LABEL: &str = "label";
const SPLIT: &str = "split";
const TRAIN: &str = "train";
const PREDICT: &str = "predict";
const EVAL: &str = "eval";

const MODEL_FILE: &str = "model/model.json";
const TRANSFORM_FILE: &str = "model/transform.json";
const PREDICTIONS_FILE: &str = "predictions.csv";

/// Base-technique descriptors and ground truth of one dataset.
struct BaseData {
    queries: DescriptorSet,
    refs: DescriptorSet,
    gt: GroundTruth,
}

#[derive(Serialize)]
struct LabelSummary<'a> {
    dataset: &'a str,
    total: usize,
    removed: usize,
    kept: usize,
    diagnostics: &'a [String],
}

#[derive(Serialize)]
struct Trial<'a> {
    config: &'a MlpConfig,
    best_val_bce: f64,
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    query_id: usize,
    dataset_tag: String,
    selected_technique: String,
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: String) -> Result<()> {
    parent_dir(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Pipeline {
    fn artifact(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out_dir().join(rel)
    }

    /// Path of an upstream artifact, or the error naming the stage that makes it.
    fn require(&self, stage: &str, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.artifact(rel);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.to_string(),
                path,
            })
        }
    }

    /// Base first, then candidates.
    fn techniques(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.resolved.base).chain(&self.resolved.candidates)
    }

    fn manifests(&self) -> impl Iterator<Item = &DatasetManifest> {
        self.resolved.manifests.iter().map(|(m, _)| m)
    }

    fn sim_path(m: &DatasetManifest, technique: &str) -> PathBuf {
        Path::new("similarity").join(&m.dataset).join(format!("{technique}.vprs"))
    }

    fn label_path(m: &DatasetManifest, suffix: &str) -> PathBuf {
        Path::new("labels").join(format!("{}{suffix}", m.dataset))
    }

    fn report_path(strategy: &Strategy, ext: &str) -> PathBuf {
        Path::new("reports").join(format!("{}.{ext}", strategy.slug()))
    }

    fn descriptors(&self, m: &DatasetManifest, name: &str) -> Result<(DescriptorSet, DescriptorSet)> {
        let entry = m
            .technique(name)
            .ok_or_else(|| Error::validation(format!("dataset `{}` lacks `{name}`", m.dataset)))?;
        let q = load_descriptors(m.resolve(&entry.query))?;
        let r = load_descriptors(m.resolve(&entry.reference))?;
        for (set, collection) in [(&q, Collection::Query), (&r, Collection::Reference)] {
            if set.technique() != name || set.collection() != collection {
                return Err(Error::validation(format!(
                    "dataset `{}`: expected {collection:?} descriptors of `{name}`, file holds {:?} of `{}`",
                    m.dataset,
                    set.collection(),
                    set.technique()
                )));
            }
        }
        Ok((q, r))
    }

    fn ground_truth(&self, m: &DatasetManifest, refs: usize) -> Result<GroundTruth> {
        GroundTruthFile::load(m.resolve(&m.ground_truth))?.resolve(refs, m.tolerance)
    }

    fn load_sim(&self, m: &DatasetManifest, name: &str) -> Result<SimilarityMatrix> {
        let metric = m.technique(name).map(|e| e.metric).unwrap_or_default();
        let sim = load_similarity(self.require(SIMILARITY, Self::sim_path(m, name))?, metric)?;
        if sim.technique() != name {
            return Err(Error::Format(format!(
                "similarity cache for `{name}` names technique `{}`",
                sim.technique()
            )));
        }
        Ok(sim)
    }

    /// Base first, then candidates.
    fn load_sims(&self, m: &DatasetManifest) -> Result<Vec<SimilarityMatrix>> {
        self.techniques().map(|t| self.load_sim(m, t)).collect()
    }

    fn check_columns(&self, labels: &MultiHotLabelSet, what: &str) -> Result<()> {
        if labels.techniques() != self.resolved.candidates.as_slice() {
            return Err(Error::validation(format!(
                "{what} has candidate columns {:?}, config expects {:?}",
                labels.techniques(),
                self.resolved.candidates
            )));
        }
        Ok(())
    }

    pub(super) fn similarity(&self) -> Result<()> {
        for m in self.manifests() {
            for name in self.techniques() {
                let entry = m.technique(name).expect("checked at config load");
                let (q, r) = self.descriptors(m, name)?;
                let sims = similarity_matrix(&q, &r, entry.metric)?;
                let path = self.artifact(Self::sim_path(m, name));
                parent_dir(&path)?;
                save_similarity(&sims, &path)?;
                log::info!("{}: `{name}` {}x{}", m.dataset, sims.queries(), sims.refs());
            }
        }
        Ok(())
    }

    pub(super) fn label(&self) -> Result<()> {
        let base = TechniqueId {
            name: self.resolved.base.clone(),
            index: 0,
        };
        for m in self.manifests() {
            let sims = self.load_sims(m)?;
            let gt = self.ground_truth(m, sims[0].refs())?;
            let (mut labels, diagnostics) = build_label_matrix(&sims, &gt, &base, &m.dataset)?;
            let unpruned = self.artifact(Self::label_path(m, ".unpruned.csv"));
            parent_dir(&unpruned)?;
            labels.write_csv(&unpruned)?;
            let total = labels.len();
            let removed = labels.prune();
            labels.write_csv(self.artifact(Self::label_path(m, ".csv")))?;
            let summary = LabelSummary {
                dataset: &m.dataset,
                total,
                removed,
                kept: labels.len(),
                diagnostics: &diagnostics,
            };
            write_text(
                &self.artifact(Self::label_path(m, ".stats.json")),
                serde_json::to_string_pretty(&summary)? + "\n",
            )?;
            log::info!("{}: {total} queries, {removed} pruned", m.dataset);
        }
        Ok(())
    }

    fn read_labels(&self, m: &DatasetManifest, suffix: &str) -> Result<MultiHotLabelSet> {
        let labels = MultiHotLabelSet::read_csv(self.require(LABEL, Self::label_path(m, suffix))?)?;
        self.check_columns(&labels, &format!("label file of `{}`", m.dataset))?;
        Ok(labels)
    }

    pub(super) fn split(&self) -> Result<()> {
        let mut parts = Vec::with_capacity(self.resolved.manifests.len());
        for (m, holdout) in &self.resolved.manifests {
            let labels = self.read_labels(m, ".csv")?;
            parts.push(if *holdout {
                DatasetSplits {
                    train: labels.slice(0..0),
                    val: labels.slice(0..0),
                    test: labels,
                }
            } else {
                split_dataset(&labels, self.config.split)?
            });
        }
        let combined = combine_datasets(&parts)?;
        for (name, set) in [("train", &combined.train), ("val", &combined.val), ("test", &combined.test)] {
            let path = self.artifact(format!("splits/{name}.csv"));
            parent_dir(&path)?;
            set.write_csv(&path)?;
        }
        log::info!(
            "splits: {} train, {} val, {} test",
            combined.train.len(),
            combined.val.len(),
            combined.test.len()
        );
        Ok(())
    }

    fn read_split(&self, name: &str) -> Result<MultiHotLabelSet> {
        let set = MultiHotLabelSet::read_csv(self.require(SPLIT, format!("splits/{name}.csv"))?)?;
        self.check_columns(&set, &format!("{name} split"))?;
        Ok(set)
    }

    fn base_data(&self) -> Result<BTreeMap<String, BaseData>> {
        let mut out = BTreeMap::new();
        let mut dims = None;
        for m in self.manifests() {
            let (queries, refs) = self.descriptors(m, &self.resolved.base)?;
            if *dims.get_or_insert(queries.dims()) != queries.dims() {
                return Err(Error::validation(format!(
                    "base descriptors of `{}` have {} dims, other datasets {}",
                    m.dataset,
                    queries.dims(),
                    dims.unwrap_or_default()
                )));
            }
            let gt = self.ground_truth(m, refs.count())?;
            if gt.queries() != queries.count() {
                return Err(Error::validation(format!(
                    "`{}`: ground truth covers {} queries, descriptors {}",
                    m.dataset,
                    gt.queries(),
                    queries.count()
                )));
            }
            out.insert(m.dataset.clone(), BaseData { queries, refs, gt });
        }
        Ok(out)
    }

    fn row_data<'a>(data: &'a BTreeMap<String, BaseData>, row: &LabelRow) -> Result<&'a BaseData> {
        let d = data
            .get(&row.dataset_tag)
            .ok_or_else(|| Error::validation(format!("unknown dataset tag `{}`", row.dataset_tag)))?;
        if row.query_id >= d.queries.count() {
            return Err(Error::validation(format!(
                "`{}` has no query {}",
                row.dataset_tag, row.query_id
            )));
        }
        Ok(d)
    }

    /// Query minus ground-truth reference, per row.
    fn training_differences(
        rows: &MultiHotLabelSet,
        data: &BTreeMap<String, BaseData>,
    ) -> Result<Vec<Vec<f64>>> {
        rows.rows()
            .iter()
            .map(|row| {
                let d = Self::row_data(data, row)?;
                difference_vector(d.queries.row(row.query_id), d.refs.row(d.gt.primary(row.query_id)))
            })
            .collect()
    }

    fn training_batch(
        rows: &MultiHotLabelSet,
        diffs: &[Vec<f64>],
        transform: &FeatureTransform,
    ) -> Result<FeatureBatch> {
        let mut batch = FeatureBatch::new(FeatureMode::Training);
        for (row, diff) in rows.rows().iter().zip(diffs) {
            let example = TrainingExample {
                features: transform.apply(diff)?,
                targets: row.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect(),
            };
            batch.push(example, FeatureMode::Training)?;
        }
        Ok(batch)
    }

    fn fit_transform(&self, diffs: &[Vec<f64>], dims: usize) -> Result<FeatureTransform> {
        let k = self.config.pca_k;
        Ok(match self.config.pca_mode {
            PcaMode::PassThrough => FeatureTransform::PassThrough { dims },
            PcaMode::Auto if dims <= k => FeatureTransform::PassThrough { dims },
            PcaMode::Auto | PcaMode::Fit => FeatureTransform::Pca(fit_pca(diffs, k)?),
        })
    }

    pub(super) fn train(&self) -> Result<()> {
        let train_rows = self.read_split("train")?;
        let val_rows = self.read_split("val")?;
        let data = self.base_data()?;
        let dims = data.values().next().map_or(0, |d| d.queries.dims());

        let train_diffs = Self::training_differences(&train_rows, &data)?;
        let transform = self.fit_transform(&train_diffs, dims)?;
        write_text(&self.artifact(TRANSFORM_FILE), transform.to_json()? + "\n")?;

        let train_set = Self::training_batch(&train_rows, &train_diffs, &transform)?;
        let val_diffs = Self::training_differences(&val_rows, &data)?;
        let val_set = Self::training_batch(&val_rows, &val_diffs, &transform)?;

        let mut cfg = MlpConfig::new(transform.output_dim(), self.resolved.candidates.len());
        self.config.mlp.apply(&mut cfg);
        cfg.seed = self.config.seed;
        if let Some(search) = &self.config.search {
            let outcome = random_search(&search.space, search.budget, self.config.seed, &cfg, &train_set, &val_set)?;
            let trials: Vec<Trial> = outcome
                .trials
                .iter()
                .map(|(config, best_val_bce)| Trial {
                    config,
                    best_val_bce: *best_val_bce,
                })
                .collect();
            write_text(
                &self.artifact("model/search.json"),
                serde_json::to_string_pretty(&trials)? + "\n",
            )?;
            cfg = outcome.best;
        }

        let (model, history) = train(&cfg, &train_set, &val_set)?;
        save_model(&model, &self.resolved.candidates, self.artifact(MODEL_FILE))?;
        write_history(&history, self.artifact("model/history.csv"))?;
        log::info!(
            "trained on {} rows; best epoch {} with validation BCE {:.6}",
            train_set.len(),
            history.best_epoch,
            history.best_val_bce()
        );
        Ok(())
    }

    fn load_selector(&self) -> Result<(MlpModel, FeatureTransform)> {
        let (model, techniques) = load_model(self.require(TRAIN, MODEL_FILE)?)?;
        let path = self.require(TRAIN, TRANSFORM_FILE)?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let transform = FeatureTransform::from_json(&text)?;
        if techniques != self.resolved.candidates {
            return Err(Error::validation(format!(
                "model predicts {techniques:?}, config expects {:?}",
                self.resolved.candidates
            )));
        }
        if transform.output_dim() != model.config().input_dim {
            return Err(Error::validation("feature transform does not match model input"));
        }
        Ok((model, transform))
    }

    /// Selector picks from query minus the base technique's top match.
    fn inference_choices(&self, rows: &MultiHotLabelSet) -> Result<Vec<usize>> {
        let (model, transform) = self.load_selector()?;
        let data = self.base_data()?;
        let mut base_sims = BTreeMap::new();
        for m in self.manifests() {
            base_sims.insert(m.dataset.clone(), self.load_sim(m, &self.resolved.base)?);
        }
        let mut batch = FeatureBatch::new(FeatureMode::Inference);
        for row in rows.rows() {
            let d = Self::row_data(&data, row)?;
            let top = base_sims[&row.dataset_tag].top_match(row.query_id);
            let diff = difference_vector(d.queries.row(row.query_id), d.refs.row(top))?;
            let example = TrainingExample {
                features: transform.apply(&diff)?,
                targets: Vec::new(),
            };
            batch.push(example, FeatureMode::Inference)?;
        }
        selector_choices(&model, &batch)
    }

    pub(super) fn predict(&self) -> Result<()> {
        let test = self.read_split("test")?;
        let choices = self.inference_choices(&test)?;
        let path = self.artifact(PREDICTIONS_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for (row, &c) in test.rows().iter().zip(&choices) {
            w.serialize(PredictionRow {
                query_id: row.query_id,
                dataset_tag: row.dataset_tag.clone(),
                selected_technique: self.resolved.candidates[c].clone(),
            })?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        log::info!("predicted {} test queries", choices.len());
        Ok(())
    }

    fn read_predictions(&self, test: &MultiHotLabelSet) -> Result<Vec<usize>> {
        let path = self.require(PREDICT, PREDICTIONS_FILE)?;
        let mut r = csv::Reader::from_path(&path)?;
        let mut choices = Vec::with_capacity(test.len());
        for (i, rec) in r.deserialize::<PredictionRow>().enumerate() {
            let rec = rec?;
            let row = test.rows().get(i).ok_or_else(|| {
                Error::validation(format!("{} has more rows than the test split", path.display()))
            })?;
            if rec.query_id != row.query_id || rec.dataset_tag != row.dataset_tag {
                return Err(Error::validation(format!(
                    "prediction {i} is for {} query {}, test split row is {} query {}",
                    rec.dataset_tag, rec.query_id, row.dataset_tag, row.query_id
                )));
            }
            let c = test.technique_index(&rec.selected_technique).ok_or_else(|| {
                Error::validation(format!("unknown technique `{}` in predictions", rec.selected_technique))
            })?;
            choices.push(c);
        }
        if choices.len() != test.len() {
            return Err(Error::validation(format!(
                "{} predictions for {} test queries",
                choices.len(),
                test.len()
            )));
        }
        Ok(choices)
    }

    /// Choices of a strategy that needs no model; `None` for the selector.
    fn static_choices(
        &self,
        strategy: &Strategy,
        train_rows: &MultiHotLabelSet,
        rows: &MultiHotLabelSet,
    ) -> Result<Option<Vec<usize>>> {
        let n = rows.len();
        Ok(Some(match strategy {
            Strategy::Selector => return Ok(None),
            Strategy::BestAverage => vec![baseline_best_average(train_rows)?; n],
            Strategy::DatasetSpecific => dataset_specific_choices(train_rows, rows)?,
            Strategy::Oracle => oracle_choices(rows),
            Strategy::Pair(name) => {
                let j = rows
                    .technique_index(name)
                    .ok_or_else(|| Error::validation(format!("`{name}` is not a candidate")))?;
                vec![j; n]
            }
        }))
    }

    fn eval_datasets(&self) -> Result<Vec<EvalDataset>> {
        self.manifests()
            .map(|m| {
                let mut sims = self.load_sims(m)?;
                let base = sims.remove(0);
                let gt = self.ground_truth(m, base.refs())?;
                Ok(EvalDataset {
                    tag: m.dataset.clone(),
                    base,
                    candidates: sims,
                    gt,
                })
            })
            .collect()
    }

    /// Unpruned queries of each dataset's test region: everything after the
    /// last train/validation query, or the whole set for holdout datasets.
    fn unpruned_test(&self, train_rows: &MultiHotLabelSet, val_rows: &MultiHotLabelSet) -> Result<MultiHotLabelSet> {
        let mut rows = Vec::new();
        for (m, holdout) in &self.resolved.manifests {
            let all = self.read_labels(m, ".unpruned.csv")?;
            let cutoff = train_rows
                .rows()
                .iter()
                .chain(val_rows.rows())
                .filter(|r| r.dataset_tag == m.dataset)
                .map(|r| r.query_id)
                .max();
            rows.extend(
                all.rows()
                    .iter()
                    .filter(|r| *holdout || cutoff.is_none_or(|c| r.query_id > c))
                    .cloned(),
            );
        }
        MultiHotLabelSet::new(self.resolved.candidates.clone(), rows)
    }

    pub(super) fn eval(&self, strategy: &Strategy) -> Result<()> {
        let test = self.read_split("test")?;
        let train_rows = self.read_split("train")?;
        let datasets = self.eval_datasets()?;
        let choices = match self.static_choices(strategy, &train_rows, &test)? {
            Some(c) => c,
            None => self.read_predictions(&test)?,
        };
        let mut report = evaluate_choices(&strategy.to_string(), &choices, &test, &datasets)?;
        report.baseline_recalls = baseline_recalls(&train_rows, &test, &datasets)?;
        if self.config.evaluate_unpruned {
            let val_rows = self.read_split("val")?;
            let unpruned = self.unpruned_test(&train_rows, &val_rows)?;
            let choices = match self.static_choices(strategy, &train_rows, &unpruned)? {
                Some(c) => c,
                None => self.inference_choices(&unpruned)?,
            };
            let r = evaluate_choices(&strategy.to_string(), &choices, &unpruned, &datasets)?;
            report.unpruned = Some(UnprunedSummary {
                queries: unpruned.len(),
                recall_at_1: r.recall_at_1,
                oracle_recall: oracle_recall(&unpruned)?,
            });
        }
        let path = self.artifact(Self::report_path(strategy, "json"));
        parent_dir(&path)?;
        write_report_json(&report, &path)?;
        log::info!(
            "{strategy}: recall@1 {:.4} over {} queries (oracle {:.4})",
            report.recall_at_1,
            test.len(),
            report.oracle_recall
        );
        Ok(())
    }

    pub(super) fn report(&self, strategy: &Strategy, emit_svg: bool) -> Result<()> {
        let path = self.require(EVAL, Self::report_path(strategy, "json"))?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let report: EvaluationReport = serde_json::from_str(&text)?;
        write_per_query_csv(&report, self.artifact(Self::report_path(strategy, "csv")))?;
        if emit_svg {
            write_strip_svg(&report, self.artifact(Self::report_path(strategy, "svg")))?;
        }
        Ok(())
    }
}
