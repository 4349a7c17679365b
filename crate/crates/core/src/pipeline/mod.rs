//! File-backed runs.
//!
//! Every stage reads its inputs from disk, writes its artifacts into one
//! directory and finishes by writing `manifest.json` there. A manifest lists
//! the SHA-256 of every input the stage consumed and of every file it
//! produced, plus the complete [`RunConfig`] it ran with. Downstream stages
//! recompute the hashes of their inputs and refuse to run on a mismatch, so a
//! chain of directories is verifiable end to end.
//!
//! Layout produced by [`run`]:
//!
//! ```text
//! <out>/config.json
//! <out>/dataset.wsbc            (+ .json sidecar, .manifest.json)
//! <out>/models/                 member_<k>.wsbw, ensemble.json, manifest.json
//! <out>/behavior/               psi.wsbw, manifest.json
//! <out>/search/                 theta.wsbw, fitness.csv, fitness_plot.py, manifest.json
//! <out>/eval/                   report.json/.csv, clone_report.json/.csv, manifest.json
//! ```
//!
//! All randomness comes from [`RunConfig::seed`]: each stage uses
//! [`rng::stage_seed`](crate::rng::stage_seed) with its own name, and
//! [`RunConfig::resolve`] writes those derived seeds into the nested
//! sections so the stored config shows the seeds actually used.

mod manifest;
mod stages;

pub use manifest::{dir_hash, file_hash, InputRef, Manifest, MANIFEST};
pub use stages::{
    evaluate, generate, run, search, sweep, train_behavior, train_models, verify_search,
    SearchRecord, CONFIG, DATASET, PSI, THETA,
};

use serde::{Deserialize, Serialize};

use crate::behavior::BcTrainConfig;
use crate::dynamics::ModelTrainConfig;
use crate::env::GenerateConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::rng;
use crate::search::SearchConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Fraction of episodes held out for early stopping.
    pub validation_fraction: f64,
    pub generate: GenerateConfig,
    pub models: ModelsConfig,
    pub behavior: BcTrainConfig,
    pub search: SearchConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    pub ensemble_size: usize,
    pub train: ModelTrainConfig,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            ensemble_size: 4,
            train: ModelTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub d_values: Vec<f64>,
    /// Search repetitions per `d`.
    pub repetitions: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d_values: vec![0.01, 0.05, 0.1, 0.5],
            repetitions: 10,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            validation_fraction: 0.2,
            generate: GenerateConfig::default(),
            models: ModelsConfig::default(),
            behavior: BcTrainConfig::default(),
            search: SearchConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::jsonfile::read(path)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::jsonfile::write(path, self)
    }

    /// Seed of a named stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        rng::stage_seed(self.seed, stage)
    }

    /// Search seed of sweep repetition `r`.
    pub fn sweep_seed(&self, r: usize) -> u64 {
        rng::derive(self.stage_seed("sweep"), rng::TAG_STAGE, r as u64, 0)
    }

    /// Copies the derived seeds into the nested sections and aligns every
    /// history length with the dataset's.
    pub fn resolve(&mut self) {
        self.generate.seed = self.stage_seed("generate");
        self.search.swarm.seed = self.stage_seed("search");
        self.eval.seed = self.stage_seed("eval");
        self.align_history(self.generate.history_len);
    }

    pub(crate) fn align_history(&mut self, history_len: usize) {
        self.models.train.overshoot.history_len = history_len;
        self.search.rollout.history_len = history_len;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.models.ensemble_size == 0 {
            return Err(Error::InvalidParameter(
                "ensemble size must be at least 1".into(),
            ));
        }
        if self.sweep.repetitions == 0 || self.sweep.d_values.is_empty() {
            return Err(Error::InvalidParameter(
                "a sweep needs at least one d and one repetition".into(),
            ));
        }
        self.generate.validate()?;
        self.models.train.validate()?;
        self.search.swarm.validate()?;
        self.search.rollout.validate()
    }
}
