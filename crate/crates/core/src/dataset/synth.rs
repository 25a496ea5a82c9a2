//! Synthetic AADT-like tables.
//!
//! Rows are road links scattered over a square region. A smooth urbanity
//! field drives every feature group through a shared group factor, so
//! features within a group are strongly correlated and grouped PCA has
//! something to compress. Density features (`rhoG_a…`, `rhoE_a…`) are real
//! zone potentials computed by [`crate::accessibility`]. The target is
//! `exp(6.5 + signal + noise)`, where `signal` is a fixed function of four
//! features and the noise standard deviation grows with the first of them.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Column, FeatureTable};
use crate::accessibility::{self, MetricKind, Zone};
use crate::error::{Error, Result};
use crate::pca::GroupManifest;
use crate::scalar::Scalar;
use crate::seed::{self, Rng as SeedRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub target_name: String,
    /// Coordinate columns (x, y); filled with planar coordinates in metres.
    pub coord_names: (String, String),
    /// Side of the square region, metres.
    pub extent: f64,
    pub n_zones: usize,
    /// Fraction of each group's dimension spanned by group-specific factors.
    pub specific_rank_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_rows: 1000,
            seed: 0,
            noise_scale: 0.5,
            target_name: "aadt".into(),
            coord_names: ("longitude".into(), "latitude".into()),
            extent: 50_000.0,
            n_zones: 40,
            specific_rank_fraction: 0.6,
        }
    }
}

/// Generates a table with default geometry; see [`synth_generate_with`].
pub fn synth_generate<T: Scalar>(
    n_rows: usize,
    manifest: &GroupManifest,
    seed: u64,
    noise_scale: f64,
) -> Result<FeatureTable<T>> {
    let cfg = SynthConfig {
        n_rows,
        seed,
        noise_scale,
        ..SynthConfig::default()
    };
    synth_generate_with(&cfg, manifest)
}

struct Bump {
    x: f64,
    y: f64,
    width: f64,
    height: f64,
}

fn urbanity(bumps: &[Bump], x: f64, y: f64) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
            b.height * (-d2 / (2.0 * b.width * b.width)).exp()
        })
        .sum()
}

fn normal(rng: &mut SeedRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Parses `rhoG_a1.5_population` into (kind, alpha, mass is employment).
fn density_spec(name: &str) -> Option<(MetricKind, f64, bool)> {
    let (kind, rest) = match name.strip_prefix("rhoG_a") {
        Some(r) => (MetricKind::Gravity, r),
        None => (MetricKind::Exponential, name.strip_prefix("rhoE_a")?),
    };
    let (alpha, suffix) = rest.split_once('_').unwrap_or((rest, ""));
    let alpha: f64 = alpha.parse().ok()?;
    Some((kind, alpha, suffix.starts_with("emp")))
}

pub fn synth_generate_with<T: Scalar>(cfg: &SynthConfig, manifest: &GroupManifest) -> Result<FeatureTable<T>> {
    if cfg.n_rows == 0 {
        return Err(Error::EmptyDataset("n_rows must be positive".into()));
    }
    if manifest.is_empty() {
        return Err(Error::invalid("manifest has no groups"));
    }
    manifest.validate()?;
    if !(cfg.noise_scale >= 0.0) {
        return Err(Error::invalid("noise_scale must be >= 0"));
    }
    let n = cfg.n_rows;
    let mut rng = seed::rng_from(cfg.seed);

    let bumps: Vec<Bump> = (0..4)
        .map(|_| Bump {
            x: rng.random::<f64>() * cfg.extent,
            y: rng.random::<f64>() * cfg.extent,
            width: cfg.extent * (0.05 + 0.15 * rng.random::<f64>()),
            height: 0.5 + rng.random::<f64>(),
        })
        .collect();
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * cfg.extent).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * cfg.extent).collect();
    let urb: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| urbanity(&bumps, x, y)).collect();
    let u_mean = urb.iter().sum::<f64>() / n as f64;
    let u_sd = (urb.iter().map(|u| (u - u_mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-12);
    let u_std: Vec<f64> = urb.iter().map(|u| (u - u_mean) / u_sd).collect();

    // zones for density features; distances in km
    let n_zones = cfg.n_zones.max(1);
    let zone_geo: Vec<(f64, f64, f64, f64, f64)> = (0..n_zones)
        .map(|_| {
            let x = rng.random::<f64>() * cfg.extent;
            let y = rng.random::<f64>() * cfg.extent;
            let u = urbanity(&bumps, x, y);
            let area_km2 = 0.5 + 2.5 * rng.random::<f64>();
            let pop = 1_000.0 + 20_000.0 * u * (0.5 + rng.random::<f64>());
            let emp = 300.0 + 15_000.0 * u * u * (0.5 + rng.random::<f64>());
            (x, y, area_km2, pop, emp)
        })
        .collect();
    let make_zones = |employment: bool| -> Result<Vec<Zone<f64>>> {
        zone_geo
            .iter()
            .enumerate()
            .map(|(k, &(x, y, a, p, e))| {
                Zone::new(format!("Z{k:03}"), x / 1000.0, y / 1000.0, if employment { e } else { p }, a)
            })
            .collect()
    };
    let points: Vec<(f64, f64)> = xs.iter().zip(&ys).map(|(&x, &y)| (x / 1000.0, y / 1000.0)).collect();
    let zone_of_row = accessibility::nearest_zone(&points, &make_zones(false)?)?;

    let (cx, cy) = (&cfg.coord_names.0, &cfg.coord_names.1);
    let mut columns: Vec<Column<T>> = Vec::with_capacity(manifest.n_features() + 3);
    let mut z_by_name: Vec<(String, Vec<f64>)> = Vec::new();
    let to_t = |v: &[f64]| v.iter().map(|&x| Some(T::lit(x))).collect::<Vec<_>>();

    for (_, feats) in manifest.iter() {
        let mut group_used = false;
        let dim = feats.len();
        let rank = ((dim as f64 * cfg.specific_rank_fraction).round() as usize).clamp(1, dim.max(1));
        let group_factor: Vec<f64> = u_std.iter().map(|u| 0.6 * u + 0.8 * normal(&mut rng)).collect();
        let specific: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..n).map(|_| normal(&mut rng)).collect())
            .collect();
        for f in feats {
            if f == cx || f == cy {
                let v = if f == cx { &xs } else { &ys };
                columns.push(Column::new(f.clone(), to_t(v)));
                continue;
            }
            if let Some((kind, alpha, employment)) = density_spec(f) {
                let zones = make_zones(employment)?;
                let pot = accessibility::potential(kind, &zones, alpha)?;
                let v: Vec<f64> = zone_of_row.iter().map(|&k| pot.potentials[k]).collect();
                columns.push(Column::new(f.clone(), to_t(&v)));
                continue;
            }
            let mut b: Vec<f64> = (0..rank).map(|_| normal(&mut rng)).collect();
            let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            b.iter_mut().for_each(|v| *v /= norm);
            let offset = 100.0 * rng.random::<f64>();
            let scale = 10f64.powf(-1.0 + 4.0 * rng.random::<f64>());
            let z: Vec<f64> = (0..n)
                .map(|i| {
                    let spec: f64 = b.iter().zip(&specific).map(|(w, s)| w * s[i]).sum();
                    0.8 * group_factor[i] + 0.6 * spec + 0.05 * normal(&mut rng)
                })
                .collect();
            let x: Vec<f64> = z.iter().map(|v| offset + scale * v).collect();
            columns.push(Column::new(f.clone(), to_t(&x)));
            // the first generated feature of a group may be informative
            if !group_used && z_by_name.len() < 4 {
                z_by_name.push((f.clone(), x.iter().map(|v| (v - offset) / scale).collect()));
            }
            group_used = true;
        }
    }

    let coeff = |k: usize| z_by_name.get(k).map(|(_, z)| z.as_slice());
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let z1 = coeff(0).map_or(0.0, |z| z[i]);
        let z2 = coeff(1).map_or(0.0, |z| z[i]);
        let z3 = coeff(2).map_or(0.0, |z| z[i]);
        let z4 = coeff(3).map_or(0.0, |z| z[i]);
        let signal = 1.0 * z1 + 0.6 * (1.5 * z2).tanh() + 0.4 * z3.max(0.0) + 0.3 * z4;
        let sd = cfg.noise_scale * (0.25 + 1.5 / (1.0 + (-2.0 * z1).exp()));
        let eps = normal(&mut rng);
        y.push((6.5 + signal + sd * eps).exp());
    }
    columns.push(Column::new(cfg.target_name.clone(), to_t(&y)));

    let mut aux = Vec::new();
    for (name, v) in [(cx, &xs), (cy, &ys)] {
        if !columns.iter().any(|c| &c.name == name) {
            columns.push(Column::new(name.clone(), to_t(v)));
            aux.push(name.clone());
        }
    }
    FeatureTable::new(columns, cfg.target_name.clone())?
        .with_auxiliary(aux)?
        .with_coords(cx.clone(), cy.clone())
}

/// Blanks each feature cell independently with probability `rate`. The
/// target, coordinate and auxiliary columns stay complete.
pub fn inject_missing<T: Scalar>(table: &FeatureTable<T>, rate: f64, seed: u64) -> Result<FeatureTable<T>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("missing rate must lie in [0, 1], got {rate}")));
    }
    let mut rng = seed::rng_from(seed);
    let mut out = table.clone();
    for name in table.feature_names() {
        if table.coord_names().is_some_and(|(x, y)| name == x || name == y) {
            continue;
        }
        let mut col = table.column(&name)?.clone();
        for v in col.values.iter_mut() {
            if rng.random::<f64>() < rate {
                *v = None;
            }
        }
        out.set_column(col)?;
    }
    Ok(out)
}

/// Appends `count` noise columns `sparse_01`, `sparse_02`, … in each of which
/// exactly `ceil(missing_fraction · n)` cells are blank.
pub fn add_sparse_columns<T: Scalar>(
    table: &FeatureTable<T>,
    count: usize,
    missing_fraction: f64,
    seed: u64,
) -> Result<FeatureTable<T>> {
    if !(0.0..=1.0).contains(&missing_fraction) {
        return Err(Error::invalid(format!(
            "missing fraction must lie in [0, 1], got {missing_fraction}"
        )));
    }
    let n = table.n_rows();
    let n_missing = ((missing_fraction * n as f64).ceil() as usize).min(n);
    let mut rng = seed::rng_from(seed);
    let mut out = table.clone();
    for k in 1..=count {
        let blank = rand::seq::index::sample(&mut rng, n, n_missing);
        let mut values: Vec<Option<T>> = (0..n).map(|_| Some(T::lit(normal(&mut rng)))).collect();
        for i in blank.iter() {
            values[i] = None;
        }
        out.set_column(Column::new(format!("sparse_{k:02}"), values))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missingness_helpers() {
        let m = GroupManifest::uniform(2, 3);
        let t: FeatureTable<f64> = synth_generate(200, &m, 1, 0.5).unwrap();
        let holed = inject_missing(&t, 0.1, 2).unwrap();
        assert!(holed.missing_cells() > 0);
        assert_eq!(holed.column("aadt").unwrap().missing_count(), 0);
        assert_eq!(holed.column("longitude").unwrap().missing_count(), 0);
        let wide = add_sparse_columns(&t, 3, 0.3, 4).unwrap();
        assert_eq!(wide.n_columns(), t.n_columns() + 3);
        assert_eq!(wide.column("sparse_02").unwrap().missing_count(), 60);
        assert_eq!(inject_missing(&t, 0.0, 2).unwrap(), t);
    }
}
