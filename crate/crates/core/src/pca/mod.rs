//! Grouped principal component analysis.
//!
//! Each feature group is z-scored with training statistics and decomposed by
//! SVD. A group keeps the smallest number of leading components whose
//! cumulative explained-variance ratio reaches the threshold.

mod manifest;

use nalgebra::{DMatrix, RealField};
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, FeatureTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use manifest::{GroupManifest, BUFFER_RADII};

/// Default cumulative explained-variance threshold.
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.995;

/// Scalars usable for the SVD backend.
pub trait PcaScalar: Scalar + RealField {}
impl<T: Scalar + RealField> PcaScalar for T {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaGroupModel<T> {
    pub group_name: String,
    pub feature_names: Vec<String>,
    pub mean: Vec<T>,
    pub scale: Vec<T>,
    /// Retained loading vectors, one per component, each of length
    /// `feature_names.len()`. Orthonormal.
    pub components: Vec<Vec<T>>,
    /// Explained-variance ratio of each retained component.
    pub explained_variance_ratio: Vec<T>,
}

impl<T: Scalar> PcaGroupModel<T> {
    pub fn original_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn retained_dim(&self) -> usize {
        self.components.len()
    }

    pub fn component_names(&self) -> Vec<String> {
        (1..=self.retained_dim())
            .map(|k| format!("{}_PC{k}", self.group_name))
            .collect()
    }

    /// Standardizes one observation of the group's features.
    pub fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    /// Component scores `Vᵀ·((x − mean)/scale)` for one observation.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        let z = self.standardize(x);
        self.components
            .iter()
            .map(|v| v.iter().zip(&z).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn cumulative_ratio(&self) -> T {
        self.explained_variance_ratio.iter().copied().sum()
    }
}

/// Number of leading components needed to reach `threshold`; ratios must be
/// sorted in non-increasing order.
pub fn components_for_threshold<T: Scalar>(ratios: &[T], threshold: T) -> usize {
    let mut cum = T::zero();
    for (k, &r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= threshold {
            return k + 1;
        }
    }
    ratios.len()
}

fn standardization<T: Scalar>(col: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(col.len());
    let mean = col.iter().copied().sum::<T>() / n;
    let ss: T = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let std = if col.len() > 1 {
        Float::sqrt(ss / (n - T::one()))
    } else {
        T::zero()
    };
    // constant columns (up to rounding in the mean) are left unscaled
    let tiny = T::lit(1e-12) * Float::max(Float::abs(mean), T::one());
    if std <= tiny {
        (mean, T::one())
    } else {
        (mean, std)
    }
}

/// Fits the PCA model of a single group from its (complete) columns.
pub fn fit_group<T: PcaScalar>(
    group_name: &str,
    feature_names: &[String],
    columns: &[Vec<T>],
    variance_threshold: T,
) -> Result<PcaGroupModel<T>> {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(Error::invalid(format!("group `{group_name}` has no features")));
    }
    if n < 2 {
        return Err(Error::EmptyDataset(format!("group `{group_name}`: need at least 2 rows")));
    }
    let (mean, scale): (Vec<T>, Vec<T>) = columns.iter().map(|c| standardization(c)).unzip();
    let z = DMatrix::<T>::from_fn(n, p, |i, j| (columns[j][i] - mean[j]) / scale[j]);

    let svd = z.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate(format!("SVD failed for group `{group_name}`")))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    // stable sort keeps the backend's order for equal singular values
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let energies: Vec<T> = order.iter().map(|&k| sv[k] * sv[k]).collect();
    let total: T = energies.iter().copied().sum();

    if !(total > T::zero()) {
        log::warn!("group `{group_name}` is constant on the training data; keeping one zero component");
        let mut e1 = vec![T::zero(); p];
        e1[0] = T::one();
        return Ok(PcaGroupModel {
            group_name: group_name.to_string(),
            feature_names: feature_names.to_vec(),
            mean,
            scale,
            components: vec![e1],
            explained_variance_ratio: vec![T::zero()],
        });
    }

    let ratios: Vec<T> = energies.iter().map(|&e| e / total).collect();
    let r = components_for_threshold(&ratios, variance_threshold).max(1);
    let components = order[..r]
        .iter()
        .map(|&k| {
            let mut v: Vec<T> = (0..p).map(|j| v_t[(k, j)]).collect();
            // largest-magnitude entry positive, first index on ties
            let mut arg = 0;
            for j in 1..p {
                if Float::abs(v[j]) > Float::abs(v[arg]) {
                    arg = j;
                }
            }
            if v[arg] < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(PcaGroupModel {
        group_name: group_name.to_string(),
        feature_names: feature_names.to_vec(),
        mean,
        scale,
        components,
        explained_variance_ratio: ratios[..r].to_vec(),
    })
}

/// One model per manifest group, fitted on the training table.
pub fn fit_group_pca<T: PcaScalar>(
    train: &FeatureTable<T>,
    manifest: &GroupManifest,
    variance_threshold: T,
) -> Result<Vec<PcaGroupModel<T>>> {
    if !(variance_threshold > T::zero() && variance_threshold <= T::one()) {
        return Err(Error::invalid(format!(
            "variance threshold must lie in (0, 1], got {variance_threshold}"
        )));
    }
    manifest.validate()?;
    let groups: Vec<(&str, &[String])> = manifest.iter().collect();
    groups
        .par_iter()
        .map(|&(g, feats)| {
            let cols = feats
                .iter()
                .map(|f| train.values(f))
                .collect::<Result<Vec<_>>>()?;
            fit_group(g, feats, &cols, variance_threshold)
        })
        .collect()
}

/// Replaces grouped features with their component scores
/// (`{group}_PC{k}`). Ungrouped columns pass through; coordinate columns are
/// always carried along and marked auxiliary.
pub fn transform<T: Scalar>(models: &[PcaGroupModel<T>], table: &FeatureTable<T>) -> Result<FeatureTable<T>> {
    let n = table.n_rows();
    let mut pc_columns: Vec<Column<T>> = Vec::new();
    let mut consumed: Vec<&str> = Vec::new();
    for m in models {
        let cols = m
            .feature_names
            .iter()
            .map(|f| table.values(f))
            .collect::<Result<Vec<_>>>()?;
        consumed.extend(m.feature_names.iter().map(String::as_str));
        let names = m.component_names();
        let mut out: Vec<Vec<T>> = vec![Vec::with_capacity(n); m.retained_dim()];
        let mut x = vec![T::zero(); cols.len()];
        for i in 0..n {
            for (j, c) in cols.iter().enumerate() {
                x[j] = c[i];
            }
            for (k, s) in m.project(&x).into_iter().enumerate() {
                out[k].push(s);
            }
        }
        pc_columns.extend(names.into_iter().zip(out).map(|(name, v)| Column::complete(name, v)));
    }
    let coords: Vec<String> = table
        .coord_names()
        .map(|(x, y)| vec![x.to_string(), y.to_string()])
        .unwrap_or_default();
    let mut columns = pc_columns;
    let mut auxiliary: Vec<String> = table.auxiliary().to_vec();
    for c in table.columns() {
        let is_coord = coords.contains(&c.name);
        if !consumed.contains(&c.name.as_str()) || is_coord {
            if is_coord && !auxiliary.contains(&c.name) {
                auxiliary.push(c.name.clone());
            }
            columns.push(c.clone());
        }
    }
    let mut out = FeatureTable::new(columns, table.target_name())?
        .with_target_scale(table.target_scale())
        .with_auxiliary(auxiliary)?;
    if let Some((x, y)) = table.coord_names() {
        out = out.with_coords(x, y)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub group: String,
    pub original_dim: usize,
    pub retained_dim: usize,
    pub retention_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub groups: Vec<RetentionRow>,
    pub total: RetentionRow,
}

pub fn retention_report<T: Scalar>(models: &[PcaGroupModel<T>]) -> RetentionReport {
    let row = |group: String, o: usize, r: usize| RetentionRow {
        group,
        original_dim: o,
        retained_dim: r,
        retention_rate: if o == 0 { 0.0 } else { r as f64 / o as f64 },
    };
    let groups: Vec<RetentionRow> = models
        .iter()
        .map(|m| row(m.group_name.clone(), m.original_dim(), m.retained_dim()))
        .collect();
    let o = groups.iter().map(|g| g.original_dim).sum();
    let r = groups.iter().map(|g| g.retained_dim).sum();
    RetentionReport {
        groups,
        total: row("Total".into(), o, r),
    }
}
