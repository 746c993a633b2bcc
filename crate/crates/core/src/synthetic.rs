//! Seeded synthetic datasets with planted complementarity regimes.
//!
//! Every query `q` has a ground-truth reference `g` and a decoy `w` half the
//! database away. The base technique's query descriptor mixes `g` and `w`
//! equally, so the base alone cannot tell them apart, and is shifted along
//! the signal direction of the query's regime. A candidate's query descriptor
//! sits near `g` when the candidate is in the regime's succeeding set and
//! near `w` otherwise, which makes the fused pair succeed exactly for the
//! succeeding candidates.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptor::{save_descriptors, Collection, DatasetManifest, DescriptorSet, TechniqueEntry};
use crate::error::{Error, Result};
use crate::fusion::Metric;
use crate::labeling::GroundTruthFile;

const SEPARATION: f64 = 0.5;
const REJECTION_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// Half-open query index ranges `[start, end)`.
    pub ranges: Vec<(usize, usize)>,
    /// Candidate indices whose pair with the base localizes these queries.
    pub succeeding: Vec<usize>,
    /// Unit-norm direction in base-descriptor space; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<Vec<f32>>,
}

fn default_dataset() -> String {
    "synthetic".into()
}

fn default_scale() -> f64 {
    1.0
}

fn default_tolerance() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    pub n_queries: usize,
    pub n_refs: usize,
    pub dims: usize,
    pub n_candidates: usize,
    pub regimes: Vec<Regime>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Length of the regime shift added to base query descriptors.
    #[serde(default = "default_scale")]
    pub signal_scale: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: usize,
}

impl SynthSpec {
    #[allow(clippy::too_many_arguments)]
    /// Regimes alternate in blocks of `block` queries, cycling through
    /// `succeeding` (one entry per regime).
    pub fn alternating(
        n_queries: usize,
        n_refs: usize,
        dims: usize,
        n_candidates: usize,
        block: usize,
        succeeding: Vec<Vec<usize>>,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        let mut ranges = vec![Vec::new(); succeeding.len()];
        let block = block.max(1);
        let mut start = 0;
        let mut k = 0;
        while start < n_queries {
            let end = (start + block).min(n_queries);
            ranges[k % succeeding.len().max(1)].push((start, end));
            start = end;
            k += 1;
        }
        let regimes = ranges
            .into_iter()
            .zip(succeeding)
            .map(|(ranges, succeeding)| Regime {
                ranges,
                succeeding,
                signal: None,
            })
            .collect();
        Self {
            dataset: default_dataset(),
            n_queries,
            n_refs,
            dims,
            n_candidates,
            regimes,
            noise_sigma,
            seed,
            signal_scale: default_scale(),
            tolerance: default_tolerance(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Regime index of every query.
    fn regime_map(&self) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; self.n_queries];
        for (r, regime) in self.regimes.iter().enumerate() {
            for &(start, end) in &regime.ranges {
                if start >= end || end > self.n_queries {
                    return Err(Error::validation(format!(
                        "regime {r} range [{start}, {end}) is empty or outside [0, {})",
                        self.n_queries
                    )));
                }
                for slot in &mut owner[start..end] {
                    if *slot != usize::MAX {
                        return Err(Error::validation(format!("regime {r} overlaps regime {slot}")));
                    }
                    *slot = r;
                }
            }
        }
        if let Some(q) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::validation(format!("query {q} belongs to no regime")));
        }
        Ok(owner)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.dims == 0 || self.n_candidates == 0 {
            return Err(Error::validation("queries, dims and candidates must be positive"));
        }
        if self.n_refs < 2 || 4 * self.tolerance + 2 > self.n_refs {
            return Err(Error::validation(format!(
                "{} references cannot keep decoys outside tolerance {}",
                self.n_refs, self.tolerance
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation("noise_sigma must be finite and non-negative"));
        }
        if !self.signal_scale.is_finite() {
            return Err(Error::validation("signal_scale must be finite"));
        }
        if self.regimes.is_empty() {
            return Err(Error::validation("at least one regime required"));
        }
        for (r, regime) in self.regimes.iter().enumerate() {
            if let Some(c) = regime.succeeding.iter().find(|&&c| c >= self.n_candidates) {
                return Err(Error::validation(format!(
                    "regime {r} names candidate {c}, only {} exist",
                    self.n_candidates
                )));
            }
            if let Some(s) = &regime.signal {
                let n = crate::descriptor::norm(s);
                if s.len() != self.dims || (n - 1.0).abs() > 1e-6 {
                    return Err(Error::validation(format!(
                        "regime {r} signal must be a unit vector of {} dims",
                        self.dims
                    )));
                }
            }
        }
        self.regime_map().map(|_| ())
    }

    pub fn candidate_names(&self) -> Vec<String> {
        (0..self.n_candidates).map(|i| format!("cand{i}")).collect()
    }
}

pub const BASE_NAME: &str = "base";

/// Generated descriptors plus the construction's intended labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    /// Base first, then candidates in order.
    pub techniques: Vec<String>,
    pub queries: Vec<DescriptorSet>,
    pub references: Vec<DescriptorSet>,
    pub ground_truth: GroundTruthFile,
    pub regime_of: Vec<usize>,
    /// `intended[q][n]`: candidate `n` is meant to succeed on query `q`.
    pub intended: Vec<Vec<bool>>,
}

fn unit_vector(rng: &mut impl Rng, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn references(rng: &mut impl Rng, count: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = unit_vector(rng, dims);
        for _ in 0..REJECTION_TRIES {
            let close = out
                .iter()
                .any(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs() >= SEPARATION);
            if !close {
                break;
            }
            v = unit_vector(rng, dims);
        }
        out.push(v);
    }
    out
}

fn to_set(name: &str, collection: Collection, rows: &[Vec<f64>]) -> Result<DescriptorSet> {
    let dims = rows[0].len();
    let data = rows.iter().flatten().map(|&x| x as f32).collect();
    DescriptorSet::new(name, collection, dims, data)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let regime_of = spec.regime_map()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = spec.dims;

    let signals: Vec<Vec<f64>> = spec
        .regimes
        .iter()
        .map(|r| match &r.signal {
            Some(s) => s.iter().map(|&x| f64::from(x)).collect(),
            None => unit_vector(&mut rng, dims),
        })
        .collect();

    let map: Vec<usize> = (0..spec.n_queries)
        .map(|q| q * spec.n_refs / spec.n_queries)
        .collect();
    let decoy = |g: usize| (g + spec.n_refs / 2) % spec.n_refs;

    let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dims)
            .map(|_| spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut techniques = vec![BASE_NAME.to_string()];
    techniques.extend(spec.candidate_names());
    let mut queries = Vec::with_capacity(techniques.len());
    let mut refs_out = Vec::with_capacity(techniques.len());

    for (t, name) in techniques.iter().enumerate() {
        let refs = references(&mut rng, spec.n_refs, dims);
        let mut rows = Vec::with_capacity(spec.n_queries);
        for (q, &g) in map.iter().enumerate() {
            let w = decoy(g);
            let eps = noise(&mut rng);
            let row: Vec<f64> = if t == 0 {
                let s = &signals[regime_of[q]];
                (0..dims)
                    .map(|i| refs[g][i] + refs[w][i] + spec.signal_scale * s[i] + eps[i])
                    .collect()
            } else {
                let target = if spec.regimes[regime_of[q]].succeeding.contains(&(t - 1)) {
                    g
                } else {
                    w
                };
                (0..dims).map(|i| refs[target][i] + eps[i]).collect()
            };
            rows.push(row);
        }
        queries.push(to_set(name, Collection::Query, &rows)?);
        refs_out.push(to_set(name, Collection::Reference, &refs)?);
    }

    let intended = regime_of
        .iter()
        .map(|&r| {
            (0..spec.n_candidates)
                .map(|c| spec.regimes[r].succeeding.contains(&c))
                .collect()
        })
        .collect();

    Ok(SynthDataset {
        spec: spec.clone(),
        techniques,
        queries,
        references: refs_out,
        ground_truth: GroundTruthFile::Traversal {
            map,
            tolerance: spec.tolerance,
        },
        regime_of,
        intended,
    })
}

impl SynthDataset {
    /// Writes VPRD files, `ground_truth.json` and `manifest.json` into `dir`;
    /// returns the manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.techniques.len());
        for ((name, q), r) in self.techniques.iter().zip(&self.queries).zip(&self.references) {
            let qf = format!("{name}_query.vprd");
            let rf = format!("{name}_reference.vprd");
            save_descriptors(q, dir.join(&qf))?;
            save_descriptors(r, dir.join(&rf))?;
            entries.push(TechniqueEntry {
                name: name.clone(),
                query: qf.into(),
                reference: rf.into(),
                metric: Metric::Cosine,
            });
        }
        self.ground_truth.save(dir.join("ground_truth.json"))?;
        let manifest = DatasetManifest::new(
            self.spec.dataset.clone(),
            entries,
            BASE_NAME,
            "ground_truth.json",
            Some(self.spec.tolerance),
        );
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}
