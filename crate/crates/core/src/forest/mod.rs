//! Random forest regression and quantile regression forests.
//!
//! Point predictions average the leaf means of all trees. Quantiles come from
//! the conditional distribution formed by the in-bag training targets of the
//! leaves that `x` reaches: row `i` receives weight
//! `wᵢ(x) = (1/T)·Σₜ cₜᵢ / |leafₜ(x)|`, where `cₜᵢ` counts the copies of row
//! `i` in tree `t`'s leaf, and the `q`-quantile is the smallest `yᵢ` whose
//! cumulative weight reaches `q`.

mod params;
mod tree;

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TargetScale;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

pub use params::{ForestParams, MaxFeatures, TreeParams};
pub use tree::{fit_tree, Node, NodeKind, RegressionTree};

/// Version of the serialized forest layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval<T> {
    pub lower: T,
    pub median: T,
    pub upper: T,
    pub coverage: T,
}

impl<T: Scalar> PredictionInterval<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    /// Applies `exp` to the three bounds (log scale to raw scale).
    pub fn exp(&self) -> Self {
        Self {
            lower: self.lower.exp(),
            median: self.median.exp(),
            upper: self.upper.exp(),
            coverage: self.coverage,
        }
    }
}

/// Weighted empirical distribution of training targets, sorted by value.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCdf<T> {
    /// `(y, weight, training row)` triples sorted by `(y, row)`.
    pub points: Vec<(T, T, u32)>,
}

impl<T: Scalar> WeightedCdf<T> {
    pub fn total_weight(&self) -> T {
        self.points.iter().map(|p| p.1).sum()
    }

    /// Smallest `y` whose cumulative weight reaches `q`.
    ///
    /// Cumulative weights are accumulated with compensated summation and
    /// compared with a slack of `256·ε`, so that a cumulative weight that
    /// equals `q` in exact arithmetic is never missed through rounding.
    pub fn quantile(&self, q: T) -> T {
        let tol = T::epsilon() * T::lit(256.0);
        let mut sum = T::zero();
        let mut comp = T::zero();
        for &(y, w, _) in &self.points {
            // Neumaier summation
            let t = sum + w;
            if sum.abs() >= w.abs() {
                comp += (sum - t) + w;
            } else {
                comp += (w - t) + sum;
            }
            sum = t;
            if sum + comp >= q - tol {
                return y;
            }
        }
        self.points.last().map_or(T::nan(), |p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForest<T> {
    pub format_version: u32,
    pub params: ForestParams,
    pub n_features: usize,
    pub target_scale: TargetScale,
    /// Training targets; leaf payloads index into this vector.
    pub y_train: Vec<T>,
    pub trees: Vec<RegressionTree<T>>,
}

/// Fits `n_estimators` trees. Tree `t` draws from a generator seeded with
/// `derive_seed(seed, t)`: first its bootstrap sample (if enabled), then its
/// per-node feature subsets. Trees are grown in parallel.
pub fn fit_forest<T: Scalar>(x: &Matrix<T>, y: &[T], params: &ForestParams) -> Result<QuantileForest<T>> {
    params.validate()?;
    tree::check_xy(x, y)?;
    let n = x.nrows();
    if n > u32::MAX as usize {
        return Err(Error::invalid("too many training rows"));
    }
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_from(seed::derive_seed(params.seed, t as u64));
            let sample: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            tree::fit_tree_on(x, y, sample, &params.tree, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileForest {
        format_version: FORMAT_VERSION,
        params: *params,
        n_features: x.ncols(),
        target_scale: TargetScale::Raw,
        y_train: y.to_vec(),
        trees,
    })
}

fn check_quantile<T: Scalar>(q: T) -> Result<()> {
    if q > T::zero() && q <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("quantile level must lie in (0, 1], got {q}")))
    }
}

fn check_coverage<T: Scalar>(c: T) -> Result<()> {
    if c > T::zero() && c < T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("coverage must lie in (0, 1), got {c}")))
    }
}

impl<T: Scalar> QuantileForest<T> {
    pub fn with_target_scale(mut self, scale: TargetScale) -> Self {
        self.target_scale = scale;
        self
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Leaf-mean prediction of every tree.
    pub fn tree_predictions(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| t.predict(x)).collect())
    }

    /// Average of the tree predictions.
    pub fn predict_mean(&self, x: &[T]) -> Result<T> {
        let p = self.tree_predictions(x)?;
        Ok(p.iter().copied().sum::<T>() / T::from_usize_lossy(p.len()))
    }

    pub fn conditional_cdf(&self, x: &[T]) -> Result<WeightedCdf<T>> {
        self.check_dim(x)?;
        let n_trees = T::from_usize_lossy(self.trees.len());
        let mut pairs: Vec<(u32, T)> = Vec::new();
        for t in &self.trees {
            let members = t.leaf_members(x);
            let w = T::one() / (n_trees * T::from_usize_lossy(members.len()));
            pairs.extend(members.iter().map(|&i| (i, w)));
        }
        pairs.sort_by_key(|p| p.0);
        let mut points: Vec<(T, T, u32)> = Vec::new();
        for (i, w) in pairs {
            match points.last_mut() {
                Some(last) if last.2 == i => last.1 += w,
                _ => points.push((self.y_train[i as usize], w, i)),
            }
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.2.cmp(&b.2)));
        Ok(WeightedCdf { points })
    }

    pub fn predict_quantile(&self, x: &[T], q: T) -> Result<T> {
        check_quantile(q)?;
        Ok(self.conditional_cdf(x)?.quantile(q))
    }

    /// Quantiles at several levels from one conditional distribution.
    pub fn predict_quantiles(&self, x: &[T], qs: &[T]) -> Result<Vec<T>> {
        qs.iter().try_for_each(|&q| check_quantile(q))?;
        let cdf = self.conditional_cdf(x)?;
        Ok(qs.iter().map(|&q| cdf.quantile(q)).collect())
    }

    /// Central interval at `coverage`: quantiles `(1 − c)/2`, `0.5` and
    /// `1 − (1 − c)/2`.
    pub fn predict_interval(&self, x: &[T], coverage: T) -> Result<PredictionInterval<T>> {
        check_coverage(coverage)?;
        let tail = (T::one() - coverage) / T::lit(2.0);
        let q = self.predict_quantiles(x, &[tail, T::lit(0.5), T::one() - tail])?;
        Ok(PredictionInterval {
            lower: q[0],
            median: q[1],
            upper: q[2],
            coverage,
        })
    }

    pub fn predict_intervals(&self, x: &Matrix<T>, coverage: T) -> Result<Vec<PredictionInterval<T>>> {
        check_coverage(coverage)?;
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_interval(x.row(i), coverage))
            .collect()
    }

    pub fn predict_quantile_batch(&self, x: &Matrix<T>, q: T) -> Result<Vec<T>> {
        check_quantile(q)?;
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_quantile(x.row(i), q))
            .collect()
    }

    pub fn predict_mean_batch(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_mean(x.row(i)))
            .collect()
    }

    /// Features used by at least one split in any tree.
    pub fn split_features(&self) -> BTreeSet<usize> {
        self.trees.iter().flat_map(|t| t.split_features()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        if f.format_version > FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "forest artifact version {} is newer than supported version {FORMAT_VERSION}",
                f.format_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_leaf_forest(y: &[f64]) -> QuantileForest<f64> {
        let x = Matrix::from_columns(&[vec![0.0; y.len()]]).unwrap();
        let params = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        fit_forest(&x, y, &params).unwrap()
    }

    #[test]
    fn single_leaf_mean() {
        let f = single_leaf_forest(&[1., 2., 3.]);
        assert_eq!(f.predict_mean(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn uniform_leaf_weights() {
        let f = single_leaf_forest(&[1., 2., 3., 4.]);
        let cdf = f.conditional_cdf(&[0.0]).unwrap();
        assert!(cdf.points.iter().all(|p| p.1 == 0.25));
        assert_eq!(f.predict_quantile(&[0.0], 0.5).unwrap(), 2.0);
        assert_eq!(f.predict_quantile(&[0.0], 1.0).unwrap(), 4.0);
    }

    #[test]
    fn interval_on_hundred_values() {
        let y: Vec<f64> = (1..=100).map(f64::from).collect();
        let f = single_leaf_forest(&y);
        let pi = f.predict_interval(&[0.0], 0.9).unwrap();
        assert_eq!((pi.lower, pi.median, pi.upper), (5.0, 50.0, 95.0));
    }

    #[test]
    fn two_disjoint_single_leaf_trees() {
        // hand-assembled forest: tree 0 holds row 0 (y=1), tree 1 holds row 1 (y=3)
        let leaf = |row: u32| RegressionTree {
            nodes: vec![Node {
                n_samples: 1,
                impurity: 0.0,
                kind: NodeKind::Leaf { start: 0, value: [1.0, 3.0][row as usize] },
            }],
            leaf_samples: vec![row],
            n_features: 1,
        };
        let f = QuantileForest {
            format_version: FORMAT_VERSION,
            params: ForestParams::default(),
            n_features: 1,
            target_scale: TargetScale::Raw,
            y_train: vec![1.0, 3.0],
            trees: vec![leaf(0), leaf(1)],
        };
        let cdf = f.conditional_cdf(&[0.0]).unwrap();
        assert_eq!(cdf.points, vec![(1.0, 0.5, 0), (3.0, 0.5, 1)]);
        assert_eq!(f.predict_mean(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn argument_validation() {
        let f = single_leaf_forest(&[1., 2.]);
        assert!(f.predict_quantile(&[0.0], 0.0).is_err());
        assert!(f.predict_quantile(&[0.0], 1.1).is_err());
        assert!(f.predict_interval(&[0.0], 1.0).is_err());
        assert!(matches!(f.predict_mean(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn newer_artifact_rejected() {
        let mut f = single_leaf_forest(&[1., 2.]);
        f.format_version = FORMAT_VERSION + 1;
        let text = serde_json::to_string(&f).unwrap();
        assert!(QuantileForest::<f64>::from_json(&text).is_err());
    }
}
