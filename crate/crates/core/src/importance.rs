//! Mean decrease in impurity (MDI) and permutation feature importance (PFI).

use std::cmp::Ordering;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{NodeKind, QuantileForest, RegressionTree};
use crate::matrix::Matrix;
use crate::metrics::pseudo_r2;
use crate::scalar::Scalar;
use crate::seed::{derive_named, derive_seed, rng_from};

pub const DEFAULT_PFI_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMethod {
    Mdi,
    Pfi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ImportanceReport<T> {
    pub method: ImportanceMethod,
    pub scores: IndexMap<String, T>,
    /// Scores divided by their sum; only present when every score is
    /// nonnegative and the sum is positive.
    pub normalized: Option<IndexMap<String, T>>,
}

impl<T: Scalar> ImportanceReport<T> {
    pub fn new(method: ImportanceMethod, scores: IndexMap<String, T>) -> Self {
        let total: T = scores.values().copied().sum();
        let nonneg = scores.values().all(|&s| s >= T::zero());
        let normalized = (nonneg && total > T::zero())
            .then(|| scores.iter().map(|(k, &v)| (k.clone(), v / total)).collect());
        Self {
            method,
            scores,
            normalized,
        }
    }

    pub fn score(&self, feature: &str) -> Option<T> {
        self.scores.get(feature).copied()
    }

    pub fn total(&self) -> T {
        self.scores.values().copied().sum()
    }

    pub fn top_k(&self, k: usize) -> Result<Vec<(String, T)>> {
        top_k(self, k)
    }
}

fn check_names(n_features: usize, names: &[String]) -> Result<()> {
    if names.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            got: names.len(),
        });
    }
    Ok(())
}

/// Per-feature impurity decrease of one tree, weighted by node share of the
/// in-bag sample.
pub fn tree_impurity_decrease<T: Scalar>(tree: &RegressionTree<T>) -> Vec<T> {
    let mut out = vec![T::zero(); tree.n_features];
    let n = T::from_usize_lossy(tree.n_samples());
    if n.is_zero() {
        return out;
    }
    for node in &tree.nodes {
        if let NodeKind::Split {
            feature, left, right, ..
        } = node.kind
        {
            let l = &tree.nodes[left as usize];
            let r = &tree.nodes[right as usize];
            let nt = T::from_usize_lossy(node.n_samples as usize);
            let nl = T::from_usize_lossy(l.n_samples as usize);
            let nr = T::from_usize_lossy(r.n_samples as usize);
            let drop = node.impurity - (nl / nt) * l.impurity - (nr / nt) * r.impurity;
            // rounding can leave a -1e-17 on a perfect split
            out[feature] += (nt / n) * drop.max(T::zero());
        }
    }
    out
}

pub fn mdi<T: Scalar>(forest: &QuantileForest<T>, feature_names: &[String]) -> Result<ImportanceReport<T>> {
    check_names(forest.n_features, feature_names)?;
    let per_tree: Vec<Vec<T>> = forest.trees.par_iter().map(tree_impurity_decrease).collect();
    let n_trees = T::from_usize_lossy(per_tree.len().max(1));
    let scores = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let s: T = per_tree.iter().map(|t| t[j]).sum();
            (name.clone(), s / n_trees)
        })
        .collect();
    Ok(ImportanceReport::new(ImportanceMethod::Mdi, scores))
}

/// Mean drop in median-prediction pseudo-R² after shuffling each column.
///
/// Shuffles are seeded by `(seed, feature name, repeat)`, so reordering the
/// columns reorders the scores and nothing else.
pub fn pfi<T: Scalar>(
    forest: &QuantileForest<T>,
    x: &Matrix<T>,
    y: &[T],
    feature_names: &[String],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport<T>> {
    check_names(forest.n_features, feature_names)?;
    if x.ncols() != forest.n_features {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features,
            got: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let half = T::lit(0.5);
    let baseline = pseudo_r2(y, &forest.predict_quantile_batch(x, half)?)?;
    let used = forest.split_features();

    let scores: Vec<T> = feature_names
        .par_iter()
        .enumerate()
        .map(|(j, name)| -> Result<T> {
            if !used.contains(&j) {
                return Ok(T::zero());
            }
            let feature_seed = derive_named(seed, name);
            let column = x.column(j);
            let mut total = T::zero();
            for r in 0..repeats {
                let mut rng = rng_from(derive_seed(feature_seed, r as u64));
                let mut perm = column.clone();
                perm.shuffle(&mut rng);
                let mut row = vec![T::zero(); x.ncols()];
                let mut preds = Vec::with_capacity(x.nrows());
                for (i, v) in perm.iter().enumerate() {
                    row.copy_from_slice(x.row(i));
                    row[j] = *v;
                    preds.push(forest.predict_quantile(&row, half)?);
                }
                total += baseline - pseudo_r2(y, &preds)?;
            }
            Ok(total / T::from_usize_lossy(repeats))
        })
        .collect::<Result<_>>()?;

    let scores = feature_names.iter().cloned().zip(scores).collect();
    Ok(ImportanceReport::new(ImportanceMethod::Pfi, scores))
}

/// Highest `k` scores, descending; equal scores in name order.
pub fn top_k<T: Scalar>(report: &ImportanceReport<T>, k: usize) -> Result<Vec<(String, T)>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mut items: Vec<(String, T)> = report.scores.iter().map(|(k, &v)| (k.clone(), v)).collect();
    items.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    items.truncate(k);
    Ok(items)
}
