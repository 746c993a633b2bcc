use serde::{Deserialize, Serialize};

use super::MultiHotLabelSet;
use crate::error::{Error, Result};

/// Contiguous train/validation/test fractions over the ordered query list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::validation("split fractions must be non-negative"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// (train, val, test) sizes: floors for train and val, remainder to test.
    pub fn sizes(&self, q: usize) -> (usize, usize, usize) {
        // The epsilon absorbs products like 0.6 * 5 = 2.9999999999999996.
        let floor = |f: f64| ((f * q as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(q);
        let val = floor(self.val).min(q - train);
        (train, val, q - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: MultiHotLabelSet,
    pub val: MultiHotLabelSet,
    pub test: MultiHotLabelSet,
}

/// Splits the (ordered) label rows into contiguous train/val/test ranges.
pub fn split_dataset(labels: &MultiHotLabelSet, spec: SplitSpec) -> Result<DatasetSplits> {
    spec.validate()?;
    let q = labels.len();
    if q < 5 {
        return Err(Error::validation(format!("need at least 5 queries to split, got {q}")));
    }
    let (train, val, _) = spec.sizes(q);
    Ok(DatasetSplits {
        train: labels.slice(0..train),
        val: labels.slice(train..train + val),
        test: labels.slice(train + val..q),
    })
}

/// Concatenates per-dataset splits, keeping each row's dataset tag.
pub fn combine_datasets(parts: &[DatasetSplits]) -> Result<DatasetSplits> {
    if parts.is_empty() {
        return Err(Error::validation("no datasets to combine"));
    }
    let pick = |f: fn(&DatasetSplits) -> &MultiHotLabelSet| -> Vec<&MultiHotLabelSet> {
        parts.iter().map(f).collect()
    };
    Ok(DatasetSplits {
        train: MultiHotLabelSet::concat(&pick(|p| &p.train))?,
        val: MultiHotLabelSet::concat(&pick(|p| &p.val))?,
        test: MultiHotLabelSet::concat(&pick(|p| &p.test))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelRow;

    fn labels(n: usize, tag: &str, techniques: &[&str]) -> MultiHotLabelSet {
        MultiHotLabelSet::new(
            techniques.iter().map(|s| s.to_string()).collect(),
            (0..n)
                .map(|q| LabelRow {
                    query_id: q,
                    dataset_tag: tag.into(),
                    labels: vec![true; techniques.len()],
                })
                .collect(),
        )
        .unwrap()
    }

    fn sizes(s: &DatasetSplits) -> (usize, usize, usize) {
        (s.train.len(), s.val.len(), s.test.len())
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        assert_eq!(sizes(&split_dataset(&labels(100, "a", &["x"]), spec).unwrap()), (60, 20, 20));
        assert_eq!(sizes(&split_dataset(&labels(10, "a", &["x"]), spec).unwrap()), (6, 2, 2));
        assert_eq!(sizes(&split_dataset(&labels(11, "a", &["x"]), spec).unwrap()), (6, 2, 3));
        assert_eq!(sizes(&split_dataset(&labels(5, "a", &["x"]), spec).unwrap()), (3, 1, 1));
        assert!(split_dataset(&labels(4, "a", &["x"]), spec).is_err());
    }

    #[test]
    fn splits_are_contiguous_and_exhaustive() {
        for q in 5..200 {
            let set = labels(q, "a", &["x"]);
            let s = split_dataset(&set, SplitSpec::default()).unwrap();
            let ids: Vec<usize> = s
                .train
                .rows()
                .iter()
                .chain(s.val.rows())
                .chain(s.test.rows())
                .map(|r| r.query_id)
                .collect();
            assert_eq!(ids, (0..q).collect::<Vec<_>>());
            assert_eq!(s.train.len(), (0.6 * q as f64 + 1e-9).floor() as usize);
        }
    }

    #[test]
    fn combine_keeps_tags() {
        let a = split_dataset(&labels(100, "gpw", &["x", "y"]), SplitSpec::default()).unwrap();
        let b = split_dataset(&labels(100, "nordland", &["x", "y"]), SplitSpec::default()).unwrap();
        let c = combine_datasets(&[a.clone(), b]).unwrap();
        assert_eq!(c.train.len(), 120);
        assert_eq!(c.train.tags(), vec!["gpw", "nordland"]);
        assert_eq!(combine_datasets(std::slice::from_ref(&a)).unwrap(), a);

        let other = split_dataset(&labels(100, "sfu", &["y", "x"]), SplitSpec::default()).unwrap();
        assert!(combine_datasets(&[a, other]).is_err());
    }

    #[test]
    fn bad_fractions() {
        let spec = SplitSpec { train: 0.5, val: 0.2, test: 0.2 };
        assert!(split_dataset(&labels(10, "a", &["x"]), spec).is_err());
    }
}
