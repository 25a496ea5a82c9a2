//! Pipeline stages. Each stage reads earlier artifacts from the output
//! directory and writes its own.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aadt_qrf::apps::{self, link_impact, mean_sd, risk_summary, simple_regression, Severity};
use aadt_qrf::dataset::{
    self, add_sparse_columns, drop_incomplete_rows, drop_sparse_columns, filter_rows, inject_missing,
    log_transform_target, split_indices, synth_generate_with, CleaningLog, FeatureTable, SplitSpec, SynthConfig,
    TargetScale,
};
use aadt_qrf::forest::{fit_forest, ForestParams, PredictionInterval, QuantileForest};
use aadt_qrf::importance::{mdi, pfi, top_k, ImportanceReport};
use aadt_qrf::metrics::{interval_metrics, point_metrics, winkler, IntervalMetrics, PointMetrics};
use aadt_qrf::pca::{fit_group_pca, retention_report, transform, GroupManifest, PcaGroupModel};
use aadt_qrf::seed::derive_named;
use aadt_qrf::tuning::{bayes_search, random_search, write_trials_jsonl, Objective};
use aadt_qrf::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{self as art, RunManifest, Stage, StageRecord};
use crate::config::{Layout, PipelineConfig, SearchMethod};
use crate::error::{CliError, CliResult};
use crate::figures;

pub struct Run {
    pub cfg: PipelineConfig,
}

impl Run {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg }
    }

    pub fn out(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Path of an artifact another stage must already have written.
    pub fn require(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(CliError::data(format!(
                "missing artifact {}; run the stage that produces it first",
                p.display()
            )));
        }
        Ok(p)
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> CliResult<T> {
        let text = fs::read_to_string(self.require(name)?)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        fs::write(self.path(name), serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        m.insert("root".to_string(), self.cfg.seed);
        for s in ["synth", "split", "tune", "importance"] {
            m.insert(s.to_string(), self.cfg.stage_seed(s));
        }
        m
    }
}

/// Stages the full pipeline runs: synthetic data only when no input table
/// is configured.
pub fn pipeline_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    Stage::PIPELINE
        .into_iter()
        .filter(|s| *s != Stage::Synth || cfg.data.input.is_none())
        .collect()
}

fn preflight(run: &Run, stages: &[Stage]) -> CliResult<()> {
    if stages.first() == Some(&Stage::Prepare) {
        let input = run.cfg.input_path();
        if !input.exists() {
            return Err(CliError::data(format!("input table {} does not exist", input.display())));
        }
    }
    if let Some(m) = &run.cfg.data.manifest {
        if stages.contains(&Stage::Pca) && !stages.contains(&Stage::Synth) && !m.exists() {
            return Err(CliError::data(format!("group manifest {} does not exist", m.display())));
        }
    }
    Ok(())
}

/// Runs `stages` in order, recording each completed stage in the run
/// manifest. `fresh` discards any earlier manifest.
pub fn execute(run: &Run, stages: &[Stage], fresh: bool) -> CliResult<RunManifest> {
    art::check_disjoint_outputs()?;
    preflight(run, stages)?;
    fs::create_dir_all(run.out())
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", run.out().display())))?;
    let hash = run.cfg.hash();
    let mut manifest = if fresh {
        None
    } else {
        RunManifest::load(run.out())?.filter(|m| m.config_hash == hash)
    }
    .unwrap_or_else(|| RunManifest::new(hash, run.seeds()));
    if fresh {
        let _ = fs::remove_file(run.path(art::RUN_MANIFEST));
    }
    for &stage in stages {
        log::info!("stage {}", stage.name());
        let t0 = Instant::now();
        let summary = run_stage(run, stage).map_err(|e| e.in_stage(stage.name()))?;
        manifest.record(StageRecord {
            stage,
            seconds: t0.elapsed().as_secs_f64(),
            artifacts: stage.outputs().iter().map(|s| s.to_string()).collect(),
        });
        if !summary.is_null() {
            manifest.metrics.insert(stage.name().to_string(), summary);
        }
        manifest.save(run.out())?;
    }
    Ok(manifest)
}

pub fn run_stage(run: &Run, stage: Stage) -> CliResult<Value> {
    match stage {
        Stage::Synth => synth(run),
        Stage::Prepare => prepare(run),
        Stage::Pca => pca(run),
        Stage::Tune => tune(run),
        Stage::Train => train(run),
        Stage::Evaluate => evaluate(run),
        Stage::Importance => importance(run),
        Stage::Apps => apps_stage(run),
        Stage::Figures => figures::emit(run),
    }
}

pub fn synth_manifest(cfg: &PipelineConfig) -> CliResult<GroupManifest> {
    let s = &cfg.synth;
    let m = match s.layout {
        Layout::Aadt => GroupManifest::aadt_layout(s.density_alpha),
        Layout::Uniform => {
            let m = GroupManifest::uniform(s.n_groups, s.group_size);
            if s.density_group {
                let a = format!("{:.1}", s.density_alpha);
                m.with_group(
                    "group_density",
                    ["rhoG", "rhoE"]
                        .iter()
                        .flat_map(|k| {
                            let a = a.clone();
                            ["employment", "population"].map(move |w| format!("{k}_a{a}_{w}"))
                        })
                        .collect(),
                )?
            } else {
                m
            }
        }
    };
    Ok(m)
}

fn synth(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let s = &cfg.synth;
    let manifest = synth_manifest(cfg)?;
    let seed = cfg.stage_seed("synth");
    let scfg = SynthConfig {
        n_rows: s.n_rows,
        seed,
        noise_scale: s.noise_scale,
        target_name: cfg.data.target.clone(),
        coord_names: cfg.data.coords.clone(),
        ..SynthConfig::default()
    };
    let mut table = synth_generate_with::<f64>(&scfg, &manifest)?;
    if s.missing_rate > 0.0 {
        table = inject_missing(&table, s.missing_rate, derive_named(seed, "missing"))?;
    }
    if s.sparse_columns > 0 {
        table = add_sparse_columns(&table, s.sparse_columns, s.sparse_missing_fraction, derive_named(seed, "sparse"))?;
    }
    table.save(run.path(art::DATA))?;
    fs::write(run.path(art::MANIFEST), manifest.to_json()? + "\n")?;
    Ok(json!({
        "rows": table.n_rows(),
        "columns": table.n_columns(),
        "groups": manifest.len(),
        "manifest_features": manifest.n_features(),
    }))
}

fn with_coords(cfg: &PipelineConfig, table: FeatureTable<f64>) -> CliResult<FeatureTable<f64>> {
    let (x, y) = &cfg.data.coords;
    if table.column_index(x).is_some() && table.column_index(y).is_some() {
        Ok(table.with_coords(x.clone(), y.clone())?)
    } else {
        Ok(table)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningReport {
    pub log: CleaningLog,
    pub consistent: bool,
    pub rows: usize,
    /// Non-target columns.
    pub columns: usize,
    /// Applied to the target by every downstream stage; the prepared table
    /// keeps raw counts.
    pub target_transform: String,
}

fn prepare(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let input = cfg.input_path();
    if !input.exists() {
        return Err(CliError::data(format!("input table {} does not exist", input.display())));
    }
    let mut table = dataset::load_table::<f64>(&input, &cfg.data.target, &cfg.data.missing_marker)?;
    let mut log = CleaningLog::default();
    if let Some(col) = &cfg.data.filter_column {
        let (t, l) = filter_rows(&table, col, &cfg.data.filter_values)?;
        table = t;
        log.append(l);
    }
    let (t, l) = drop_sparse_columns(&table, cfg.data.missing_threshold)?;
    log.append(l);
    let (t, l) = drop_incomplete_rows(&t)?;
    log.append(l);
    table = t;
    // fail here rather than downstream on a non-positive count
    log_transform_target(&table)?;
    table.save(run.path(art::PREPARED))?;
    let report = CleaningReport {
        consistent: log.is_consistent(),
        rows: table.n_rows(),
        columns: table.n_columns() - 1,
        log,
        target_transform: "log".into(),
    };
    run.write_json(art::CLEANING_LOG, &report)?;
    Ok(json!({ "rows": report.rows, "columns": report.columns }))
}

/// Row bookkeeping and column roles of the PCA feature tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_fraction: f64,
    pub seed: u64,
    /// Row indices into the prepared table.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub target: String,
    pub target_scale: TargetScale,
    pub feature_names: Vec<String>,
    pub auxiliary: Vec<String>,
    pub coords: Option<(String, String)>,
}

fn load_prepared(run: &Run) -> CliResult<FeatureTable<f64>> {
    let t = dataset::load_table::<f64>(run.require(art::PREPARED)?, &run.cfg.data.target, &run.cfg.data.missing_marker)?;
    with_coords(&run.cfg, t)
}

fn pca(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let prepared = load_prepared(run)?;
    let logged = log_transform_target(&prepared)?;
    let spec = SplitSpec::new(cfg.split.train_fraction, cfg.stage_seed("split"))?;
    let (train_rows, test_rows) = split_indices(logged.n_rows(), &spec)?;
    let train = logged.select_rows(&train_rows);
    let test = logged.select_rows(&test_rows);

    let manifest_path = cfg.manifest_path();
    if !manifest_path.exists() {
        return Err(CliError::data(format!("group manifest {} does not exist", manifest_path.display())));
    }
    let full = GroupManifest::load(&manifest_path)?;
    let present: Vec<String> = prepared.feature_names();
    let manifest = full.restrict(|f| present.iter().any(|p| p == f));
    let lost = full.n_features() - manifest.n_features();
    if lost > 0 {
        log::warn!("{lost} manifest features were removed by cleaning");
    }
    let models = fit_group_pca(&train, &manifest, cfg.pca.variance_threshold)?;
    let train_pc = transform(&models, &train)?;
    let test_pc = transform(&models, &test)?;
    train_pc.save(run.path(art::FEATURES_TRAIN))?;
    test_pc.save(run.path(art::FEATURES_TEST))?;

    let info = SplitInfo {
        train_fraction: spec.train_fraction,
        seed: spec.seed,
        train_rows,
        test_rows,
        target: cfg.data.target.clone(),
        target_scale: TargetScale::Log,
        feature_names: train_pc.feature_names(),
        auxiliary: train_pc.auxiliary().to_vec(),
        coords: train_pc.coord_names().map(|(x, y)| (x.to_string(), y.to_string())),
    };
    run.write_json(art::SPLIT, &info)?;
    run.write_json(art::PCA_MODELS, &models)?;
    let retention = retention_report(&models);
    run.write_json(art::PCA_RETENTION, &retention)?;
    Ok(json!({
        "train_rows": info.train_rows.len(),
        "test_rows": info.test_rows.len(),
        "original_dim": retention.total.original_dim,
        "retained_dim": retention.total.retained_dim,
        "model_features": info.feature_names.len(),
    }))
}

/// Feature matrix, log target and table of one partition.
pub struct Partition {
    pub info: SplitInfo,
    pub table: FeatureTable<f64>,
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
}

pub fn load_partition(run: &Run, test: bool) -> CliResult<Partition> {
    let info: SplitInfo = run.read_json(art::SPLIT)?;
    let name = if test { art::FEATURES_TEST } else { art::FEATURES_TRAIN };
    let mut table = dataset::load_table::<f64>(run.require(name)?, &info.target, &run.cfg.data.missing_marker)?
        .with_target_scale(info.target_scale)
        .with_auxiliary(info.auxiliary.clone())?;
    if let Some((x, y)) = &info.coords {
        table = table.with_coords(x.clone(), y.clone())?;
    }
    let x = table.matrix(&info.feature_names)?;
    let y = table.target()?;
    Ok(Partition { info, table, x, y })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestParams {
    pub method: SearchMethod,
    pub objective: Objective,
    pub best_trial: usize,
    pub best_score: f64,
    pub n_trials: usize,
    pub params: ForestParams,
}

fn tune(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let train = load_partition(run, false)?;
    let space = cfg.search.space();
    let tc = cfg.tune_config();
    let result = match cfg.tune.method {
        SearchMethod::Bayes => bayes_search(&space, &tc, &train.x, &train.y)?,
        SearchMethod::Random => random_search(&space, &tc, &train.x, &train.y)?,
    };
    let file = fs::File::create(run.path(art::TRIALS))?;
    write_trials_jsonl(std::io::BufWriter::new(file), &result.trials)?;
    let best = BestParams {
        method: cfg.tune.method,
        objective: result.objective,
        best_trial: result.best_trial,
        best_score: result.best_score,
        n_trials: result.trials.len(),
        params: result.best,
    };
    run.write_json(art::BEST_PARAMS, &best)?;
    Ok(json!({ "best_trial": best.best_trial, "best_score": best.best_score }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub feature_names: Vec<String>,
    pub forest: QuantileForest<f64>,
}

pub fn load_model(run: &Run) -> CliResult<ModelArtifact> {
    let m: ModelArtifact = run.read_json(art::FOREST)?;
    if m.forest.format_version > aadt_qrf::forest::FORMAT_VERSION {
        return Err(CliError::data(format!(
            "forest format {} is newer than supported {}",
            m.forest.format_version,
            aadt_qrf::forest::FORMAT_VERSION
        )));
    }
    Ok(m)
}

fn train(run: &Run) -> CliResult<Value> {
    let best: BestParams = run.read_json(art::BEST_PARAMS)?;
    let train = load_partition(run, false)?;
    let forest = fit_forest(&train.x, &train.y, &best.params)?.with_target_scale(TargetScale::Log);
    let model = ModelArtifact {
        feature_names: train.info.feature_names.clone(),
        forest,
    };
    fs::write(run.path(art::FOREST), serde_json::to_string(&model)?)?;
    Ok(json!({ "n_trees": model.forest.n_trees(), "n_features": model.feature_names.len() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleMetrics {
    pub point: PointMetrics<f64>,
    pub interval: IntervalMetrics<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub coverage: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub log: ScaleMetrics,
    pub raw: ScaleMetrics,
}

/// One row of `predictions.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub y_true_log: f64,
    pub lower_log: f64,
    pub median_log: f64,
    pub upper_log: f64,
    pub y_true: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

pub fn read_csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| CliError::data(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn scale_metrics(y: &[f64], iv: &[PredictionInterval<f64>], coverage: f64, scale: TargetScale) -> CliResult<ScaleMetrics> {
    let med: Vec<f64> = iv.iter().map(|p| p.median).collect();
    Ok(ScaleMetrics {
        point: point_metrics(y, &med)?,
        interval: interval_metrics(y, iv, coverage, scale)?,
    })
}

fn evaluate(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let model = load_model(run)?;
    let test = load_partition(run, true)?;
    if model.feature_names != test.info.feature_names {
        return Err(CliError::data("model features differ from the test features"));
    }
    let coverage = cfg.evaluate.coverage;
    let iv_log = model.forest.predict_intervals(&test.x, coverage)?;
    let iv_raw: Vec<PredictionInterval<f64>> = iv_log.iter().map(PredictionInterval::exp).collect();
    let y_raw: Vec<f64> = test.y.iter().map(|v| v.exp()).collect();

    let metrics = MetricsArtifact {
        coverage,
        n_train: test.info.train_rows.len(),
        n_test: test.y.len(),
        log: scale_metrics(&test.y, &iv_log, coverage, TargetScale::Log)?,
        raw: scale_metrics(&y_raw, &iv_raw, coverage, TargetScale::Raw)?,
    };
    run.write_json(art::METRICS, &metrics)?;

    let coords = test.table.coords();
    let rows: Vec<PredictionRow> = (0..test.y.len())
        .map(|i| PredictionRow {
            row: test.info.test_rows[i],
            x: coords.as_ref().map(|c| c[i].0),
            y: coords.as_ref().map(|c| c[i].1),
            y_true_log: test.y[i],
            lower_log: iv_log[i].lower,
            median_log: iv_log[i].median,
            upper_log: iv_log[i].upper,
            y_true: y_raw[i],
            lower: iv_raw[i].lower,
            median: iv_raw[i].median,
            upper: iv_raw[i].upper,
        })
        .collect();
    write_csv_rows(&run.path(art::PREDICTIONS), &rows)?;

    let bounds = |iv: &[PredictionInterval<f64>]| -> (Vec<f64>, Vec<f64>) {
        (iv.iter().map(|p| p.lower).collect(), iv.iter().map(|p| p.upper).collect())
    };
    let (ll, ul) = bounds(&iv_log);
    let (lr, ur) = bounds(&iv_raw);
    let (_, w_log) = winkler(&test.y, &ll, &ul, coverage)?;
    let (_, w_raw) = winkler(&y_raw, &lr, &ur, coverage)?;
    #[derive(Serialize)]
    struct WinklerRow {
        row: usize,
        winkler_log: f64,
        winkler_raw: f64,
    }
    let wrows: Vec<WinklerRow> = (0..w_log.len())
        .map(|i| WinklerRow {
            row: test.info.test_rows[i],
            winkler_log: w_log[i],
            winkler_raw: w_raw[i],
        })
        .collect();
    write_csv_rows(&run.path(art::WINKLER), &wrows)?;

    Ok(json!({
        "picp": metrics.log.interval.picp,
        "naw": metrics.log.interval.naw,
        "rai": metrics.log.interval.rai,
        "rmse_log": metrics.log.point.rmse,
        "pseudo_r2_log": metrics.log.point.pseudo_r2,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceArtifact {
    #[serde(flatten)]
    pub report: ImportanceReport<f64>,
    pub top: Vec<(String, f64)>,
}

fn importance(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let model = load_model(run)?;
    let test = load_partition(run, true)?;
    let k = cfg.importance.top_k;
    let m = mdi(&model.forest, &model.feature_names)?;
    let p = pfi(
        &model.forest,
        &test.x,
        &test.y,
        &model.feature_names,
        cfg.importance.repeats,
        cfg.stage_seed("importance"),
    )?;
    let mt = top_k(&m, k)?;
    let pt = top_k(&p, k)?;
    let overlap = mt.iter().filter(|(f, _)| pt.iter().any(|(g, _)| g == f)).count();
    let summary = json!({
        "mdi_top": mt.first().map(|t| t.0.clone()),
        "pfi_top": pt.first().map(|t| t.0.clone()),
        "top_k_overlap": overlap,
    });
    run.write_json(art::IMPORTANCE_MDI, &ImportanceArtifact { report: m, top: mt })?;
    run.write_json(art::IMPORTANCE_PFI, &ImportanceArtifact { report: p, top: pt })?;
    Ok(summary)
}

/// One row of `apps_links.csv`; impact columns are empty for trimmed links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkRow {
    pub row: usize,
    pub dlog: f64,
    pub retained: bool,
    pub delta_t: Option<f64>,
    pub time_max: Option<f64>,
    pub speed_max: Option<f64>,
    pub delta_r_fatal: Option<f64>,
    pub delta_r_serious: Option<f64>,
    pub delta_r_slight: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthPoint {
    pub row: usize,
    pub log_accessibility: f64,
    pub width_log: f64,
}

fn trimmed_mask(dlogs: &[f64], cfg: &PipelineConfig) -> Vec<bool> {
    match cfg.apps.trim_count {
        Some(k) => {
            let mut order: Vec<usize> = (0..dlogs.len()).collect();
            order.sort_by(|&a, &b| dlogs[b].total_cmp(&dlogs[a]).then(b.cmp(&a)));
            let mut keep = vec![true; dlogs.len()];
            for &i in order.iter().take(k) {
                keep[i] = false;
            }
            keep
        }
        None => dlogs.iter().map(|&d| d <= cfg.apps.trim_threshold).collect(),
    }
}

fn accessibility_column(cfg: &PipelineConfig, prepared: &FeatureTable<f64>) -> Option<String> {
    if let Some(c) = &cfg.regression.accessibility_column {
        return Some(c.clone());
    }
    prepared
        .column_names()
        .into_iter()
        .find(|n| n.starts_with("rhoG_") && n.ends_with("population"))
        .map(str::to_string)
}

fn apps_stage(run: &Run) -> CliResult<Value> {
    let cfg = &run.cfg;
    let preds: Vec<PredictionRow> = read_csv_rows(&run.require(art::PREDICTIONS)?)?;
    let scenario = cfg.apps.scenario();
    let dlogs = preds
        .iter()
        .map(|p| {
            apps::dlog_width(&PredictionInterval {
                lower: p.lower,
                median: p.median,
                upper: p.upper,
                coverage: cfg.evaluate.coverage,
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let mask = trimmed_mask(&dlogs, cfg);
    let mut rows = Vec::with_capacity(preds.len());
    let mut retained = Vec::new();
    let mut impacts = Vec::new();
    for ((p, &d), &keep) in preds.iter().zip(&dlogs).zip(&mask) {
        let imp = if keep { Some(link_impact(&scenario, d)?) } else { None };
        if let Some(i) = imp {
            retained.push(d);
            impacts.push(i);
        }
        rows.push(LinkRow {
            row: p.row,
            dlog: d,
            retained: keep,
            delta_t: imp.map(|i| i.delta_t),
            time_max: imp.map(|i| i.time_max),
            speed_max: imp.map(|i| i.speed_max),
            delta_r_fatal: imp.map(|i| i.delta_r_fatal),
            delta_r_serious: imp.map(|i| i.delta_r_serious),
            delta_r_slight: imp.map(|i| i.delta_r_slight),
        });
    }
    write_csv_rows(&run.path(art::APPS_LINKS), &rows)?;

    let mut risk = Vec::new();
    for s in Severity::ALL {
        let v: Vec<f64> = impacts.iter().map(|i| i.delta_r(s)).collect();
        if v.is_empty() {
            continue;
        }
        let r = risk_summary(&v)?;
        risk.push(json!({
            "severity": s.as_str(),
            "beta": scenario.risk.beta(s),
            "mean": r.mean,
            "variance": r.variance,
            "iqr": r.iqr,
        }));
    }
    let delta_t: Vec<f64> = impacts.iter().map(|i| i.delta_t).collect();
    let summary = json!({
        "n_links": dlogs.len(),
        "n_retained": retained.len(),
        "trim_threshold": cfg.apps.trim_threshold,
        "trim_count": cfg.apps.trim_count,
        "scenario": scenario,
        "dlog_all": mean_sd(&dlogs).ok(),
        "dlog_retained": mean_sd(&retained).ok(),
        "delta_t": mean_sd(&delta_t).ok(),
        "risk": risk,
    });
    run.write_json(art::APPS_SUMMARY, &summary)?;

    let regression = width_regression(run, &preds)?;
    run.write_json(art::WIDTH_REGRESSION, &regression)?;
    Ok(json!({
        "n_retained": retained.len(),
        "dlog_mean": summary["dlog_all"]["mean"],
        "width_regression_r2": regression.get("r2").cloned().unwrap_or(Value::Null),
    }))
}

fn width_regression(run: &Run, preds: &[PredictionRow]) -> CliResult<Value> {
    let prepared = load_prepared(run)?;
    let Some(column) = accessibility_column(&run.cfg, &prepared) else {
        write_csv_rows::<WidthPoint>(&run.path(art::WIDTH_POINTS), &[])?;
        return Ok(json!({ "status": "skipped", "reason": "no accessibility column" }));
    };
    let acc = prepared.values(&column)?;
    let mut points = Vec::new();
    let mut dropped = 0usize;
    for p in preds {
        let a = acc[p.row];
        if a > 0.0 {
            points.push(WidthPoint {
                row: p.row,
                log_accessibility: a.ln(),
                width_log: p.upper_log - p.lower_log,
            });
        } else {
            dropped += 1;
        }
    }
    write_csv_rows(&run.path(art::WIDTH_POINTS), &points)?;
    let x: Vec<f64> = points.iter().map(|p| p.log_accessibility).collect();
    let y: Vec<f64> = points.iter().map(|p| p.width_log).collect();
    match simple_regression(&x, &y) {
        Ok(r) => Ok(json!({
            "status": "ok",
            "column": column,
            "response": "log-scale interval width",
            "regressor": format!("ln({column})"),
            "n": r.n,
            "non_positive_dropped": dropped,
            "slope": r.slope,
            "intercept": r.intercept,
            "slope_std_error": r.slope_std_error,
            "r2": r.r2,
        })),
        Err(e) => Ok(json!({ "status": "skipped", "column": column, "reason": e.to_string() })),
    }
}

/// Convenience used by the figures stage.
pub fn load_models(run: &Run) -> CliResult<Vec<PcaGroupModel<f64>>> {
    run.read_json(art::PCA_MODELS)
}
