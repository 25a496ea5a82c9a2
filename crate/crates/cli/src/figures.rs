//! SVG figures rendered from the run artifacts.

use std::fs;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::artifacts as art;
use crate::error::CliResult;
use crate::stages::{read_csv_rows, LinkRow, PredictionRow, Run, WidthPoint};
use crate::svg::{bar_chart, kde, padded_range, rank_classes, Chart, PALETTE5};

const QUINTILES: [&str; 5] = ["lowest 20%", "20-40%", "40-60%", "60-80%", "highest 20%"];

#[derive(Deserialize)]
struct TopList {
    top: Vec<(String, f64)>,
}

pub fn emit(run: &Run) -> CliResult<Value> {
    let preds: Vec<PredictionRow> = read_csv_rows(&run.require(art::PREDICTIONS)?)?;
    let links: Vec<LinkRow> = read_csv_rows(&run.require(art::APPS_LINKS)?)?;
    let width_pts: Vec<WidthPoint> = read_csv_rows(&run.require(art::WIDTH_POINTS)?)?;
    let regression: Value = serde_json::from_str(&fs::read_to_string(run.require(art::WIDTH_REGRESSION)?)?)?;
    let mdi: TopList = serde_json::from_str(&fs::read_to_string(run.require(art::IMPORTANCE_MDI)?)?)?;
    let pfi: TopList = serde_json::from_str(&fs::read_to_string(run.require(art::IMPORTANCE_PFI)?)?)?;
    fs::create_dir_all(run.path(art::FIGURES_DIR))?;

    let write = |name: &str, svg: String| fs::write(run.path(name), svg);
    write(art::FIG_ERROR, error_vs_true(&preds))?;
    let errors: Vec<f64> = preds.iter().map(|p| p.median - p.y_true).collect();
    write(art::FIG_MAP_ERROR, quintile_map("Prediction error by quintile", &preds, &errors))?;
    let widths: Vec<f64> = preds.iter().map(|p| p.upper - p.lower).collect();
    write(art::FIG_MAP_WIDTH, quintile_map("Interval width by quintile", &preds, &widths))?;
    let dlog: Vec<f64> = links.iter().filter(|l| l.retained).map(|l| l.dlog).collect();
    write(art::FIG_DLOG, density("Relative interval width", "dlog", &dlog))?;
    let dt: Vec<f64> = links.iter().filter_map(|l| l.delta_t).collect();
    write(art::FIG_DELTA_T, density("Travel time increase", "delta t (min)", &dt))?;
    write(art::FIG_REGRESSION, width_regression(&width_pts, &regression))?;
    write(art::FIG_MDI, bar_chart("Impurity importance", "mean decrease in impurity", &mdi.top))?;
    write(art::FIG_PFI, bar_chart("Permutation importance", "decrease in pseudo R2", &pfi.top))?;
    Ok(json!({ "figures": art::Stage::Figures.outputs().len(), "points": preds.len() }))
}

fn error_vs_true(preds: &[PredictionRow]) -> String {
    let xs = preds.iter().map(|p| p.y_true);
    let ys = preds.iter().flat_map(|p| [p.lower - p.y_true, p.upper - p.y_true]);
    let mut c = Chart::new(
        "Prediction error against observed AADT",
        "observed AADT",
        "prediction minus observed",
        padded_range(xs),
        padded_range(ys),
    );
    c.hline(0.0, "#888");
    for p in preds {
        let bar = [(p.y_true, p.lower - p.y_true), (p.y_true, p.upper - p.y_true)];
        c.line(&bar, PALETTE5[3], 1.0);
    }
    c.legend("interval", PALETTE5[3]);
    c.legend("median", PALETTE5[1]);
    for p in preds {
        c.point(p.y_true, p.median - p.y_true, 2.5, PALETTE5[1]);
    }
    c.finish()
}

/// Points at link coordinates coloured by rank quintile of `values`; the
/// row index stands in for position when the table has no coordinates.
fn quintile_map(title: &str, preds: &[PredictionRow], values: &[f64]) -> String {
    let pos: Vec<(f64, f64)> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| match (p.x, p.y) {
            (Some(x), Some(y)) => (x, y),
            _ => (i as f64, values[i]),
        })
        .collect();
    let classes = rank_classes(values, 5);
    let mut c = Chart::new(
        title,
        "x",
        "y",
        padded_range(pos.iter().map(|p| p.0)),
        padded_range(pos.iter().map(|p| p.1)),
    );
    for (&(x, y), &k) in pos.iter().zip(&classes) {
        c.point(x, y, 3.0, PALETTE5[k]);
    }
    for (label, color) in QUINTILES.iter().zip(PALETTE5) {
        c.legend(label, color);
    }
    c.finish()
}

fn density(title: &str, x_label: &str, values: &[f64]) -> String {
    let curve = kde(values, 200);
    let mut c = Chart::new(
        title,
        x_label,
        "density",
        padded_range(curve.iter().map(|p| p.0)),
        padded_range(curve.iter().map(|p| p.1).chain([0.0])),
    );
    let xs: Vec<f64> = curve.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = curve.iter().map(|p| p.1).collect();
    c.band(&xs, &vec![0.0; xs.len()], &ys, PALETTE5[2], 0.3);
    c.line(&curve, PALETTE5[1], 1.5);
    c.finish()
}

fn width_regression(points: &[WidthPoint], fit: &Value) -> String {
    let (xr, yr) = (
        padded_range(points.iter().map(|p| p.log_accessibility)),
        padded_range(points.iter().map(|p| p.width_log)),
    );
    let title = match fit["r2"].as_f64() {
        Some(r2) => format!("Interval width against accessibility (R2 = {r2:.3})"),
        None => "Interval width against accessibility".to_string(),
    };
    let mut c = Chart::new(&title, "ln accessibility", "log-scale interval width", xr, yr);
    for p in points {
        c.point(p.log_accessibility, p.width_log, 2.5, PALETTE5[1]);
    }
    if let (Some(b), Some(a)) = (fit["slope"].as_f64(), fit["intercept"].as_f64()) {
        c.line(&[(xr.0, a + b * xr.0), (xr.1, a + b * xr.1)], "#d62728", 2.0);
    }
    c.finish()
}
