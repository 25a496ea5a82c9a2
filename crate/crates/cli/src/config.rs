//! Versioned TOML pipeline configuration.

use std::path::{Path, PathBuf};

use aadt_qrf::forest::MaxFeatures;
use aadt_qrf::seed::derive_named;
use aadt_qrf::tuning::{Objective, SearchSpace, TuneConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    /// Root of every random stream in the run.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SynthSection,
    pub pca: PcaSection,
    pub split: SplitSection,
    pub tune: TuneSection,
    pub search: SearchSection,
    pub evaluate: EvaluateSection,
    pub importance: ImportanceSection,
    pub apps: AppsSection,
    pub regression: RegressionSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from("aadt_run"),
            data: DataConfig::default(),
            synth: SynthSection::default(),
            pca: PcaSection::default(),
            split: SplitSection::default(),
            tune: TuneSection::default(),
            search: SearchSection::default(),
            evaluate: EvaluateSection::default(),
            importance: ImportanceSection::default(),
            apps: AppsSection::default(),
            regression: RegressionSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw feature table. When absent the pipeline generates one.
    pub input: Option<PathBuf>,
    /// Group manifest JSON; defaults to the one written next to synthetic data.
    pub manifest: Option<PathBuf>,
    pub target: String,
    pub missing_marker: String,
    pub filter_column: Option<String>,
    pub filter_values: Vec<f64>,
    /// Columns with a larger missing fraction are dropped.
    pub missing_threshold: f64,
    /// (x, y) coordinate columns, used for maps when present.
    pub coords: (String, String),
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: None,
            manifest: None,
            target: "aadt".into(),
            missing_marker: aadt_qrf::dataset::DEFAULT_MISSING_MARKER.into(),
            filter_column: None,
            filter_values: Vec::new(),
            missing_threshold: 0.25,
            coords: ("longitude".into(), "latitude".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `n_groups` groups of `group_size` features.
    Uniform,
    /// The 51-group, 888-feature AADT layout.
    Aadt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_rows: usize,
    pub noise_scale: f64,
    pub layout: Layout,
    pub n_groups: usize,
    pub group_size: usize,
    /// Adds a gravity/exponential density group to the uniform layout.
    pub density_group: bool,
    pub density_alpha: f64,
    /// Per-cell probability of a blank feature value.
    pub missing_rate: f64,
    /// Extra mostly-empty columns.
    pub sparse_columns: usize,
    pub sparse_missing_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_rows: 2000,
            noise_scale: 0.5,
            layout: Layout::Uniform,
            n_groups: 6,
            group_size: 5,
            density_group: true,
            density_alpha: 1.5,
            missing_rate: 0.0,
            sparse_columns: 0,
            sparse_missing_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub variance_threshold: f64,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self {
            variance_threshold: aadt_qrf::pca::DEFAULT_VARIANCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Bayes,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub method: SearchMethod,
    pub n_iter: usize,
    pub cv_folds: usize,
    pub coverage: f64,
    pub objective: Objective,
}

impl Default for TuneSection {
    fn default() -> Self {
        let t = TuneConfig::default();
        Self {
            method: SearchMethod::Bayes,
            n_iter: t.n_iter,
            cv_folds: t.cv_folds,
            coverage: t.coverage,
            objective: t.objective,
        }
    }
}

/// Search space with `max_features` written as strings or numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub n_estimators: [usize; 2],
    pub max_features: Vec<MaxFeatures>,
    pub max_depth: [usize; 2],
    pub min_samples_split: [usize; 2],
    pub min_samples_leaf: [usize; 2],
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self {
            n_estimators: [s.n_estimators.0, s.n_estimators.1],
            max_features: s.max_features,
            max_depth: [s.max_depth.0, s.max_depth.1],
            min_samples_split: [s.min_samples_split.0, s.min_samples_split.1],
            min_samples_leaf: [s.min_samples_leaf.0, s.min_samples_leaf.1],
        }
    }
}

impl SearchSection {
    pub fn space(&self) -> SearchSpace {
        let r = |a: [usize; 2]| (a[0], a[1]);
        SearchSpace {
            n_estimators: r(self.n_estimators),
            max_features: self.max_features.clone(),
            max_depth: r(self.max_depth),
            min_samples_split: r(self.min_samples_split),
            min_samples_leaf: r(self.min_samples_leaf),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub coverage: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { coverage: 0.85 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSection {
    pub repeats: usize,
    pub top_k: usize,
}

impl Default for ImportanceSection {
    fn default() -> Self {
        Self {
            repeats: aadt_qrf::importance::DEFAULT_PFI_REPEATS,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppsSection {
    pub trim_threshold: f64,
    /// Drop this many largest widths instead of applying the threshold.
    pub trim_count: Option<usize>,
    pub t_f: f64,
    pub q_k: f64,
    pub q_base: f64,
    pub bpr_alpha: f64,
    pub bpr_beta: f64,
    pub link_length: f64,
    pub v_base: f64,
    pub beta_fatal: f64,
    pub beta_serious: f64,
    pub beta_slight: f64,
}

impl Default for AppsSection {
    fn default() -> Self {
        Self {
            trim_threshold: aadt_qrf::apps::DEFAULT_TRIM_THRESHOLD,
            trim_count: None,
            t_f: 15.0,
            q_k: 100.0,
            q_base: 20.0,
            bpr_alpha: 0.15,
            bpr_beta: 4.0,
            link_length: 10.0,
            v_base: 40.0,
            beta_fatal: 3.6,
            beta_serious: 2.4,
            beta_slight: 1.2,
        }
    }
}

impl AppsSection {
    pub fn scenario(&self) -> aadt_qrf::apps::Scenario<f64> {
        use aadt_qrf::apps::{BprParams, RiskParams, Scenario};
        Scenario {
            bpr: BprParams {
                t_f: self.t_f,
                q_k: self.q_k,
                alpha: self.bpr_alpha,
                beta: self.bpr_beta,
            },
            risk: RiskParams {
                v_base: self.v_base,
                beta_fatal: self.beta_fatal,
                beta_serious: self.beta_serious,
                beta_slight: self.beta_slight,
            },
            q_base: self.q_base,
            link_length: self.link_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    /// Zone accessibility column regressed against interval width. When
    /// absent the first `rhoG_*population` column is used, if any.
    pub accessibility_column: Option<String>,
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.data.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.manifest.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::usage(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if !(0.0..=1.0).contains(&self.data.missing_threshold) {
            return bad("data.missing_threshold must lie in [0, 1]".into());
        }
        if !(self.pca.variance_threshold > 0.0 && self.pca.variance_threshold <= 1.0) {
            return bad("pca.variance_threshold must lie in (0, 1]".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad("split.train_fraction must lie in (0, 1)".into());
        }
        if !(self.evaluate.coverage > 0.0 && self.evaluate.coverage < 1.0) {
            return bad("evaluate.coverage must lie in (0, 1)".into());
        }
        if self.importance.repeats == 0 || self.importance.top_k == 0 {
            return bad("importance.repeats and importance.top_k must be >= 1".into());
        }
        if self.synth.n_rows == 0 {
            return bad("synth.n_rows must be >= 1".into());
        }
        self.search.space().validate().map_err(CliError::usage_from)?;
        self.tune_config().validate().map_err(CliError::usage_from)?;
        self.apps.scenario().bpr.validate().map_err(CliError::usage_from)?;
        self.apps.scenario().risk.validate().map_err(CliError::usage_from)?;
        Ok(())
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            n_iter: self.tune.n_iter,
            cv_folds: self.tune.cv_folds,
            coverage: self.tune.coverage,
            objective: self.tune.objective,
            seed: self.stage_seed("tune"),
        }
    }

    /// Seed of a named stage, derived from the root seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_named(self.seed, stage)
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn input_path(&self) -> PathBuf {
        self.data
            .input
            .clone()
            .unwrap_or_else(|| self.output_dir.join(crate::artifacts::DATA))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data
            .manifest
            .clone()
            .unwrap_or_else(|| self.output_dir.join(crate::artifacts::MANIFEST))
    }
}
