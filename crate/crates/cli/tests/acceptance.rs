//! Acceptance criteria; prints one PASS/FAIL line per criterion.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aadt_qrf::apps::{bpr_time, collision_delta_r, quantile_linear, risk_summary, simple_regression, BprParams, RiskParams, Severity};
use aadt_qrf::dataset::{load_table, log_transform_target, split_indices, synth_generate, SplitSpec};
use aadt_qrf::forest::{fit_forest, ForestParams, MaxFeatures, TreeParams};
use aadt_qrf::importance::{mdi, pfi, top_k};
use aadt_qrf::metrics::{cv_width, naw, picp, point_metrics, rai, winkler};
use aadt_qrf::pca::{fit_group, GroupManifest};
use aadt_qrf::seed::rng_from;
use aadt_qrf::tuning::{BayesOptimizer, Dimension, SearchSpace, Value};
use aadt_qrf::Matrix;
use rand::Rng;
use support::{linear_quantile, normal_equations, qrf_weights, ratio, weighted_quantile};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("QRF oracle equivalence", qrf_oracle),
        ("metric fixtures", metric_fixtures),
        ("PCA correctness", pca_correctness),
        ("coverage property", coverage_property),
        ("tuning sanity", tuning_sanity),
        ("importance", importance),
        ("applications arithmetic", apps_arithmetic),
        ("pipeline reproducibility", pipeline_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}; {secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn qrf_oracle() -> Outcome {
    let start = Instant::now();
    let qs = [(1, 10), (1, 4), (1, 2), (3, 4), (9, 10)];
    let mut checked = 0;
    let datasets = 24;
    for seed in 0..datasets {
        let mut rng = rng_from(1000 + seed);
        let n = rng.random_range(5..=200);
        let d = rng.random_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..40) as f64 / 4.0).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| (2.0 * r[0] + rng.random_range(0..6) as f64).round()).collect();
        let params = ForestParams {
            n_estimators: rng.random_range(1..=5),
            tree: TreeParams {
                max_depth: if rng.random_bool(0.5) { Some(rng.random_range(1..6)) } else { None },
                min_samples_split: rng.random_range(2..6),
                min_samples_leaf: rng.random_range(1..5),
                max_features: MaxFeatures::Fraction(rng.random_range(0.3..1.0)),
            },
            bootstrap: rng.random_bool(0.7),
            seed,
        };
        let forest = fit_forest(&x, &y, &params).map_err(|e| e.to_string())?;
        let mut probes: Vec<Vec<f64>> = rows.iter().take(10).cloned().collect();
        probes.extend((0..10).map(|_| (0..d).map(|_| rng.random_range(-1.0..11.0)).collect::<Vec<f64>>()));
        for p in &probes {
            let w = qrf_weights(&forest, &x, p);
            for (a, b) in qs {
                let want = weighted_quantile(&y, &w, &ratio(a, b));
                let got = forest.predict_quantile(p, a as f64 / b as f64).map_err(|e| e.to_string())?;
                ensure!(got == want, "dataset {seed}, q = {a}/{b}: {got} vs oracle {want}");
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{datasets} datasets, {checked} quantiles exact"))
}

fn metric_fixtures() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let e = |r: aadt_qrf::Result<f64>| r.map_err(|e| e.to_string());
    ensure!(close(e(picp(&[1.0, 5.0, 10.0], &[0.0, 6.0, 9.0], &[2.0, 7.0, 11.0]))?, 2.0 / 3.0), "picp");
    ensure!(close(e(naw(&[0.0, 4.0], &[0.0, 1.0], &[1.0, 4.0]))?, 0.5), "naw");
    ensure!(close(e(rai(0.5, 0.9, 0.5, 0.5))?, 1.45), "rai");
    let (w, _) = winkler(&[1.0], &[2.0], &[4.0], 0.85).map_err(|e| e.to_string())?;
    ensure!(close(w, 2.0 + 2.0 / 0.15), "winkler below interval: {w}");
    let (w, _) = winkler(&[5.0], &[2.0], &[4.0], 0.9).map_err(|e| e.to_string())?;
    ensure!(close(w, 2.0 + 20.0), "winkler above interval: {w}");
    ensure!(close(e(cv_width(&[0.0, 0.0], &[1.0, 3.0]))?, 50.0 * 2f64.sqrt()), "cv_width");
    let (_, per) = winkler(&[3.0, 2.5], &[2.0, 1.25], &[4.5, 2.5], 0.9).map_err(|e| e.to_string())?;
    ensure!(per == vec![2.5, 1.25], "winkler middle case {per:?}");

    let mut rng = rng_from(77);
    for k in 0..1000 {
        let n = rng.random_range(2..60);
        let y: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(1.0..100.0)).collect();
        let yhat: Vec<f64> = y.iter().map(|v| v + rng.random_range(-50.0..50.0)).collect();
        let m = point_metrics(&y, &yhat).map_err(|e| e.to_string())?;
        ensure!(m.rmse >= m.mae, "vector {k}: rmse {} < mae {}", m.rmse, m.mae);
    }
    Ok("fixtures within 1e-9, rmse >= mae on 1000 vectors".into())
}

fn pca_correctness() -> Outcome {
    const THRESHOLD: f64 = 0.995;
    let names = |p: usize| (0..p).map(|j| format!("f{j}")).collect::<Vec<_>>();
    let mut groups = 0;
    for seed in 0..20u64 {
        let mut rng = rng_from(500 + seed);
        let (n, p, rank) = (rng.random_range(20..120), rng.random_range(2..10), rng.random_range(1..4));
        let latent: Vec<Vec<f64>> = (0..rank).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| {
                let w: Vec<f64> = (0..rank).map(|_| rng.random_range(-2.0..2.0)).collect();
                let scale = rng.random_range(0.1..100.0);
                (0..n)
                    .map(|i| scale * ((0..rank).map(|k| w[k] * latent[k][i]).sum::<f64>() + 0.05 * rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let m = fit_group("g", &names(p), &cols, THRESHOLD).map_err(|e| e.to_string())?;
        let k = m.retained_dim();
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = m.components[a].iter().zip(&m.components[b]).map(|(u, v)| u * v).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                ensure!((dot - want).abs() <= 1e-8, "group {seed}: loadings {a},{b} dot {dot}");
            }
        }
        let (mut err, mut total) = (0.0, 0.0);
        for i in 0..n {
            let x: Vec<f64> = cols.iter().map(|c| c[i]).collect();
            let (z, s) = (m.standardize(&x), m.project(&x));
            for j in 0..p {
                let recon: f64 = (0..k).map(|c| s[c] * m.components[c][j]).sum();
                err += (z[j] - recon).powi(2);
                total += z[j] * z[j];
            }
        }
        ensure!(err <= (1.0 - THRESHOLD) * total + 1e-8, "group {seed}: reconstruction {err} of {total}");
        for v in &m.components {
            let arg = (0..p).fold(0, |a, j| if v[j].abs() > v[a].abs() { j } else { a });
            ensure!(v[arg] > 0.0, "group {seed}: sign convention");
        }
        let again = fit_group("g", &names(p), &cols, THRESHOLD).map_err(|e| e.to_string())?;
        ensure!(again == m, "group {seed}: refit differs");
        groups += 1;
    }
    let base: Vec<f64> = (0..50).map(|i| ((i * 37) % 23) as f64).collect();
    let dup = vec![base.clone(), base.clone(), base.clone()];
    let m = fit_group("dup", &names(3), &dup, THRESHOLD).map_err(|e| e.to_string())?;
    ensure!(m.retained_dim() == 1, "duplicated group keeps {}", m.retained_dim());
    Ok(format!("{groups} random groups, duplicated group keeps 1 component"))
}

fn coverage_property() -> Outcome {
    let start = Instant::now();
    let manifest = GroupManifest::uniform(4, 5);
    let table = synth_generate::<f64>(2000, &manifest, 2024, 0.5).map_err(|e| e.to_string())?;
    let table = log_transform_target(&table).map_err(|e| e.to_string())?;
    let names = table.feature_names();
    ensure!(names.len() == 20, "{} features", names.len());
    let (tr, te) = split_indices(table.n_rows(), &SplitSpec::new(0.8, 1).unwrap()).map_err(|e| e.to_string())?;
    let (a, b) = (table.select_rows(&tr), table.select_rows(&te));
    let params = ForestParams {
        n_estimators: 100,
        tree: TreeParams {
            min_samples_leaf: 5,
            ..TreeParams::default()
        },
        seed: 9,
        ..ForestParams::default()
    };
    let forest = fit_forest(&a.matrix(&names).unwrap(), &a.target().unwrap(), &params).map_err(|e| e.to_string())?;
    let iv = forest.predict_intervals(&b.matrix(&names).unwrap(), 0.85).map_err(|e| e.to_string())?;
    let lo: Vec<f64> = iv.iter().map(|p| p.lower).collect();
    let hi: Vec<f64> = iv.iter().map(|p| p.upper).collect();
    let p = picp(&b.target().unwrap(), &lo, &hi).map_err(|e| e.to_string())?;
    ensure!((0.80..=0.95).contains(&p), "PICP {p:.4}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("PICP {p:.4} on {} test rows", te.len()))
}

fn tuning_sanity() -> Outcome {
    let f = |x: f64| (-(x - 0.3).powi(2) / 0.02).exp() + 0.6 * (-(x + 0.5).powi(2) / 0.1).exp();
    let (low, high) = (-1.0, 1.0);
    let grid = (0..1000)
        .map(|i| f(low + (high - low) * i as f64 / 999.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut opt = BayesOptimizer::new(vec![Dimension::Real { low, high }], 10, 42);
    for _ in 0..30 {
        let (p, _) = opt.ask();
        let Value::Real(x) = p[0] else {
            return Err("non-real proposal".into());
        };
        opt.tell(p, f(x));
    }
    let best = opt.incumbent().unwrap().1;
    ensure!(best >= 0.9 * grid, "incumbent {best} vs grid optimum {grid}");

    let space = SearchSpace::default();
    let mut rng = rng_from(3);
    for i in 0..1000 {
        let p = space.sample(&mut rng, 0);
        let inside = (30..=300).contains(&p.n_estimators)
            && p.tree.max_depth.is_some_and(|d| (10..=50).contains(&d))
            && (2..=20).contains(&p.tree.min_samples_split)
            && (1..=15).contains(&p.tree.min_samples_leaf)
            && space.max_features.contains(&p.tree.max_features);
        ensure!(inside, "sample {i} outside the space: {p:?}");
    }
    Ok(format!("incumbent {best:.4} vs grid {grid:.4} after 30 trials, 1000 samples in space"))
}

fn importance() -> Outcome {
    let names: Vec<String> = (0..5).map(|j| format!("x{j}")).collect();
    let mut rng = rng_from(8);
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let mut r: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
            r[4] = 1.0;
            r
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| 10.0 * r[2]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let forest = fit_forest(&x, &y, &ForestParams { n_estimators: 30, seed: 5, ..ForestParams::default() })
        .map_err(|e| e.to_string())?;
    ensure!(!forest.split_features().contains(&4), "constant column was split on");
    let m = mdi(&forest, &names).map_err(|e| e.to_string())?;
    let p = pfi(&forest, &x, &y, &names, 5, 11).map_err(|e| e.to_string())?;
    ensure!(p.score("x4") == Some(0.0), "PFI of unused feature {:?}", p.score("x4"));
    let (tm, tp) = (top_k(&m, 1).unwrap(), top_k(&p, 1).unwrap());
    ensure!(tm[0].0 == "x2" && tp[0].0 == "x2", "top features {} and {}", tm[0].0, tp[0].0);
    Ok("unused PFI = 0, informative feature ranked first by MDI and PFI".into())
}

fn apps_arithmetic() -> Outcome {
    let bpr = BprParams::<f64>::new(15.0, 100.0).map_err(|e| e.to_string())?;
    let t = bpr_time(&bpr, 20.0).map_err(|e| e.to_string())?;
    ensure!((t - 15.0036).abs() <= 1e-6, "bpr_time {t}");
    let risk = RiskParams::<f64>::default();
    let dr = collision_delta_r(&risk, 0.9 * risk.v_base, Severity::Fatal).map_err(|e| e.to_string())?;
    ensure!((dr - 0.9f64.powf(3.6)).abs() <= 1e-9, "delta r {dr}");

    let mut rng = rng_from(21);
    let v: Vec<f64> = (0..137).map(|_| rng.random_range(0.2..2.5)).collect();
    let s = risk_summary(&v).map_err(|e| e.to_string())?;
    let iqr = linear_quantile(&v, 0.75) - linear_quantile(&v, 0.25);
    ensure!((s.iqr - iqr).abs() <= 1e-12, "iqr {} vs {iqr}", s.iqr);
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    for q in [0.05, 0.5, 0.95] {
        let got = quantile_linear(&sorted, q).map_err(|e| e.to_string())?;
        ensure!((got - linear_quantile(&v, q)).abs() <= 1e-12, "quantile {q}");
    }

    let x: Vec<f64> = (0..80).map(|_| rng.random_range(-400..400) as f64 / 4.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.75 * v - 3.0 + rng.random_range(-40..40) as f64 / 4.0).collect();
    let r = simple_regression(&x, &y).map_err(|e| e.to_string())?;
    let (b, a) = normal_equations(&x, &y);
    ensure!((r.slope - b).abs() <= 1e-10 && (r.intercept - a).abs() <= 1e-10, "regression ({}, {}) vs ({b}, {a})", r.slope, r.intercept);
    Ok(format!("bpr {t:.6}, delta r {dr:.6}"))
}

const SMALL_RUN: &str = r#"
seed = 13
[synth]
n_rows = 300
n_groups = 3
group_size = 4
[tune]
n_iter = 4
cv_folds = 3
[search]
n_estimators = [5, 15]
max_depth = [3, 12]
[importance]
repeats = 2
"#;

const FIXTURE: &str = r#"
seed = 7
[synth]
n_rows = 400
layout = "aadt"
missing_rate = 0.00066
sparse_columns = 22
"#;

fn cli(args: &[&str]) -> i32 {
    aadt_cli::run_from(std::iter::once("aadt").chain(args.iter().copied()))
}

fn pipeline_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let cfg = root.join("small.toml");
    fs::write(&cfg, SMALL_RUN).unwrap();
    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let code = cli(&["-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "pipeline"]);
        ensure!(code == 0, "pipeline run {run} exited {code}");
        metrics.push(fs::read(out.join("metrics.json")).map_err(|e| e.to_string())?);
    }
    ensure!(metrics[0] == metrics[1], "metrics.json differs between runs");

    let fx = root.join("fixture.toml");
    fs::write(&fx, FIXTURE).unwrap();
    let out = root.join("fx");
    for stage in ["synth", "prepare"] {
        let code = cli(&["-c", fx.to_str().unwrap(), "--out", out.to_str().unwrap(), stage]);
        ensure!(code == 0, "{stage} exited {code}");
    }
    let raw = load_table::<f64>(out.join("data.csv"), "aadt", "NA").map_err(|e| e.to_string())?;
    let prepared = load_table::<f64>(out.join("prepared.csv"), "aadt", "NA").map_err(|e| e.to_string())?;
    let (before, after) = (feature_count(&raw), feature_count(&prepared));
    ensure!((before, after) == (910, 888), "columns {before} -> {after}");
    ensure!(raw.missing_cells() > 0, "fixture has no missing cells");
    ensure!(prepared.missing_cells() == 0, "{} missing cells after cleaning", prepared.missing_cells());
    ensure!(prepared.n_rows() > 0 && prepared.n_rows() < raw.n_rows(), "rows {} -> {}", raw.n_rows(), prepared.n_rows());
    Ok(format!(
        "metrics.json identical ({} bytes); fixture {before} -> {after} columns, {} -> {} complete rows",
        metrics[0].len(),
        raw.n_rows(),
        prepared.n_rows()
    ))
}

fn feature_count(t: &aadt_qrf::dataset::FeatureTable<f64>) -> usize {
    t.n_columns() - 1
}
