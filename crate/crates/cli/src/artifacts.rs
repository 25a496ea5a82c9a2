//! Artifact names, the stage that owns each one, and the run manifest.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DATA: &str = "data.csv";
pub const MANIFEST: &str = "manifest.json";
pub const PREPARED: &str = "prepared.csv";
pub const CLEANING_LOG: &str = "cleaning_log.json";
pub const SPLIT: &str = "split.json";
pub const PCA_MODELS: &str = "pca_models.json";
pub const PCA_RETENTION: &str = "pca_retention.json";
pub const FEATURES_TRAIN: &str = "features_train.csv";
pub const FEATURES_TEST: &str = "features_test.csv";
pub const TRIALS: &str = "trials.jsonl";
pub const BEST_PARAMS: &str = "best_params.json";
pub const FOREST: &str = "forest.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const METRICS: &str = "metrics.json";
pub const WINKLER: &str = "winkler.csv";
pub const IMPORTANCE_MDI: &str = "importance_mdi.json";
pub const IMPORTANCE_PFI: &str = "importance_pfi.json";
pub const APPS_LINKS: &str = "apps_links.csv";
pub const APPS_SUMMARY: &str = "apps_summary.json";
pub const WIDTH_REGRESSION: &str = "width_regression.json";
pub const WIDTH_POINTS: &str = "width_regression.csv";
pub const FIGURES_DIR: &str = "figures";
pub const RUN_MANIFEST: &str = "run_manifest.json";

pub const FIG_ERROR: &str = "figures/error_vs_true.svg";
pub const FIG_MAP_ERROR: &str = "figures/map_error.svg";
pub const FIG_MAP_WIDTH: &str = "figures/map_width_quintile.svg";
pub const FIG_DLOG: &str = "figures/dlog_density.svg";
pub const FIG_REGRESSION: &str = "figures/width_regression.svg";
pub const FIG_DELTA_T: &str = "figures/delta_t_density.svg";
pub const FIG_MDI: &str = "figures/importance_mdi.svg";
pub const FIG_PFI: &str = "figures/importance_pfi.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Prepare,
    Pca,
    Tune,
    Train,
    Evaluate,
    Importance,
    Apps,
    Figures,
}

impl Stage {
    pub const PIPELINE: [Stage; 9] = [
        Stage::Synth,
        Stage::Prepare,
        Stage::Pca,
        Stage::Tune,
        Stage::Train,
        Stage::Evaluate,
        Stage::Importance,
        Stage::Apps,
        Stage::Figures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Prepare => "prepare",
            Stage::Pca => "pca",
            Stage::Tune => "tune",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
            Stage::Apps => "apps",
            Stage::Figures => "figures",
        }
    }

    /// Artifacts written by the stage, relative to the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &[DATA, MANIFEST],
            Stage::Prepare => &[PREPARED, CLEANING_LOG],
            Stage::Pca => &[SPLIT, PCA_MODELS, PCA_RETENTION, FEATURES_TRAIN, FEATURES_TEST],
            Stage::Tune => &[TRIALS, BEST_PARAMS],
            Stage::Train => &[FOREST],
            Stage::Evaluate => &[PREDICTIONS, METRICS, WINKLER],
            Stage::Importance => &[IMPORTANCE_MDI, IMPORTANCE_PFI],
            Stage::Apps => &[APPS_LINKS, APPS_SUMMARY, WIDTH_REGRESSION, WIDTH_POINTS],
            Stage::Figures => &[
                FIG_ERROR,
                FIG_MAP_ERROR,
                FIG_MAP_WIDTH,
                FIG_DLOG,
                FIG_REGRESSION,
                FIG_DELTA_T,
                FIG_MDI,
                FIG_PFI,
            ],
        }
    }
}

/// Fails if two stages claim the same artifact path.
pub fn check_disjoint_outputs() -> CliResult<()> {
    let mut seen = HashSet::new();
    for s in Stage::PIPELINE {
        for a in s.outputs() {
            if !seen.insert(*a) {
                return Err(CliError::internal(format!("artifact {a} is written by two stages")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Completed stages in execution order.
    pub stages: Vec<StageRecord>,
    pub metrics: IndexMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(config_hash: String, seeds: BTreeMap<String, u64>) -> Self {
        Self {
            config_hash,
            seeds,
            stages: Vec::new(),
            metrics: IndexMap::new(),
        }
    }

    pub fn load(out_dir: &Path) -> CliResult<Option<Self>> {
        let path = out_dir.join(RUN_MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Replaces any earlier record of the same stage.
    pub fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.stage != rec.stage);
        self.stages.push(rec);
    }

    pub fn completed(&self, stage: Stage) -> bool {
        self.stages.iter().any(|s| s.stage == stage)
    }

    /// Paths listed as complete that are missing on disk.
    pub fn missing_artifacts(&self, out_dir: &Path) -> Vec<PathBuf> {
        self.stages
            .iter()
            .flat_map(|s| s.artifacts.iter())
            .map(|a| out_dir.join(a))
            .filter(|p| !p.exists())
            .collect()
    }

    /// Written through a temporary file so a crash never leaves a torn
    /// manifest.
    pub fn save(&self, out_dir: &Path) -> CliResult<()> {
        let tmp = out_dir.join(format!("{RUN_MANIFEST}.tmp"));
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, out_dir.join(RUN_MANIFEST))?;
        Ok(())
    }
}
