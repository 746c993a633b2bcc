//! Stage-wise experiment driver. Each stage reads its inputs from the output
//! directory and writes its artifacts back there, so any stage can be rerun
//! on cached upstream results.

mod config;
mod stages;

pub use config::{DatasetRef, ExperimentConfig, MlpOverrides, PcaMode, Resolved, SearchConfig};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Similarity,
    Label,
    Split,
    Train,
    Predict,
    Eval,
    Report,
    All,
}

impl Stage {
    pub const CHAIN: [Stage; 7] = [
        Stage::Similarity,
        Stage::Label,
        Stage::Split,
        Stage::Train,
        Stage::Predict,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Similarity => "similarity",
            Stage::Label => "label",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(Stage::All)
            .chain(Stage::CHAIN)
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown stage `{s}`")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the second technique of each query's pair is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Selector,
    BestAverage,
    DatasetSpecific,
    Oracle,
    Pair(String),
}

impl Strategy {
    /// File-name friendly form.
    pub fn slug(&self) -> String {
        match self {
            Strategy::Pair(n) => format!("pair-{n}"),
            other => other.to_string(),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "selector" => Strategy::Selector,
            "best-average" => Strategy::BestAverage,
            "dataset-specific" => Strategy::DatasetSpecific,
            "oracle" => Strategy::Oracle,
            _ => match s.strip_prefix("pair:") {
                Some(n) if !n.is_empty() => Strategy::Pair(n.to_string()),
                _ => return Err(Error::validation(format!("unknown strategy `{s}`"))),
            },
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Selector => f.write_str("selector"),
            Strategy::BestAverage => f.write_str("best-average"),
            Strategy::DatasetSpecific => f.write_str("dataset-specific"),
            Strategy::Oracle => f.write_str("oracle"),
            Strategy::Pair(n) => write!(f, "pair:{n}"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub pca_k: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub strategy: Strategy,
    pub emit_svg: bool,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    stage: &'a str,
    strategy: String,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
    started_unix: u64,
}

pub struct Pipeline {
    config: ExperimentConfig,
    resolved: Resolved,
}

impl Pipeline {
    pub fn new(mut config: ExperimentConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(o) = &overrides.out_dir {
            config.out_dir = o.clone();
        }
        if let Some(k) = overrides.pca_k {
            config.pca_k = k;
        }
        let resolved = config.resolve()?;
        Ok(Self { config, resolved })
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?, overrides)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn candidates(&self) -> &[String] {
        &self.resolved.candidates
    }

    /// Runs one stage (or the whole chain) after writing the run record.
    pub fn run(&self, stage: Stage, opts: &RunOptions) -> Result<()> {
        self.write_run_record(stage, opts)?;
        let stages: Vec<Stage> = if stage == Stage::All {
            Stage::CHAIN.to_vec()
        } else {
            vec![stage]
        };
        for st in stages {
            log::info!("stage {st}");
            match st {
                Stage::Similarity => self.similarity()?,
                Stage::Label => self.label()?,
                Stage::Split => self.split()?,
                Stage::Train => self.train()?,
                Stage::Predict => self.predict()?,
                Stage::Eval => self.eval(&opts.strategy)?,
                Stage::Report => self.report(&opts.strategy, opts.emit_svg)?,
                Stage::All => unreachable!("expanded above"),
            }
        }
        Ok(())
    }

    fn write_run_record(&self, stage: Stage, opts: &RunOptions) -> Result<()> {
        let out = self.out_dir();
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let record = RunRecord {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            stage: stage.name(),
            strategy: opts.strategy.to_string(),
            seed: self.config.seed,
            config_sha256: self.config.sha256()?,
            config: &self.config,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = out.join("run_record.json");
        fs::write(&path, serde_json::to_string_pretty(&record)? + "\n").map_err(|e| Error::io(&path, e))
    }
}
