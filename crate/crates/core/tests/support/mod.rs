//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use aadt_qrf::forest::{NodeKind, QuantileForest, RegressionTree};
use aadt_qrf::Matrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Leaf node reached by `x`, walking the split nodes directly.
pub fn route(tree: &RegressionTree<f64>, x: &[f64]) -> usize {
    let mut i = 0;
    while let NodeKind::Split {
        feature,
        threshold,
        left,
        right,
    } = tree.nodes[i].kind
    {
        i = if x[feature] <= threshold { left } else { right } as usize;
    }
    i
}

/// In-bag multiplicity of every training row in one tree.
pub fn inbag_counts(tree: &RegressionTree<f64>) -> HashMap<usize, i64> {
    let mut c = HashMap::new();
    for &i in &tree.leaf_samples {
        *c.entry(i as usize).or_insert(0) += 1;
    }
    c
}

/// Exact QRF weights: w_i = (1/T) Σ_t c_t(i)·[leaf_t(x_i) = leaf_t(x)] / Σ_j c_t(j)·[leaf_t(x_j) = leaf_t(x)].
/// Leaf co-membership comes from routing the training rows, not from the
/// stored leaf payloads.
pub fn qrf_weights(forest: &QuantileForest<f64>, x_train: &Matrix<f64>, x: &[f64]) -> Vec<BigRational> {
    let n = x_train.nrows();
    let t = forest.trees.len() as i64;
    let mut w = vec![BigRational::zero(); n];
    for tree in &forest.trees {
        let target = route(tree, x);
        let counts = inbag_counts(tree);
        let members: Vec<(usize, i64)> = counts
            .iter()
            .filter(|(&i, _)| route(tree, x_train.row(i)) == target)
            .map(|(&i, &c)| (i, c))
            .collect();
        let total: i64 = members.iter().map(|m| m.1).sum();
        for (i, c) in members {
            w[i] += ratio(c, t * total);
        }
    }
    w
}

/// min{ y : Σ_{y_i ≤ y} w_i ≥ q } in exact arithmetic.
pub fn weighted_quantile(y: &[f64], w: &[BigRational], q: &BigRational) -> f64 {
    let mut values: Vec<f64> = y.iter().copied().zip(w).filter(|(_, w)| !w.is_zero()).map(|p| p.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    for v in values {
        let f: BigRational = y
            .iter()
            .zip(w)
            .filter(|(yi, _)| **yi <= v)
            .map(|(_, wi)| wi.clone())
            .sum();
        if &f >= q {
            return v;
        }
    }
    panic!("weights do not sum to one");
}

pub fn sum_is_one(w: &[BigRational]) -> bool {
    w.iter().cloned().sum::<BigRational>() == BigRational::one()
}

/// Per-feature MDI of one tree, recomputed from the in-bag rows routed
/// through the tree: Σ over splits of (N_t/N)·(MSE_t − (n_l/N_t)·MSE_l − (n_r/N_t)·MSE_r).
pub fn mdi_tree(tree: &RegressionTree<f64>, x_train: &Matrix<f64>, y: &[f64]) -> Vec<f64> {
    let counts = inbag_counts(tree);
    let mut members: Vec<Vec<(usize, i64)>> = vec![Vec::new(); tree.nodes.len()];
    for (&i, &c) in &counts {
        let mut node = 0;
        loop {
            members[node].push((i, c));
            match tree.nodes[node].kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x_train.get(i, feature) <= threshold { left } else { right } as usize,
                NodeKind::Leaf { .. } => break,
            }
        }
    }
    let stats = |m: &[(usize, i64)]| -> (f64, f64) {
        let n: i64 = m.iter().map(|p| p.1).sum();
        if n == 0 {
            return (0.0, 0.0);
        }
        let mean = m.iter().map(|&(i, c)| c as f64 * y[i]).sum::<f64>() / n as f64;
        let mse = m.iter().map(|&(i, c)| c as f64 * (y[i] - mean).powi(2)).sum::<f64>() / n as f64;
        (n as f64, mse)
    };
    let (total, _) = stats(&members[0]);
    let mut out = vec![0.0; tree.n_features];
    for (k, node) in tree.nodes.iter().enumerate() {
        if let NodeKind::Split {
            feature, left, right, ..
        } = node.kind
        {
            let (nt, it) = stats(&members[k]);
            let (nl, il) = stats(&members[left as usize]);
            let (nr, ir) = stats(&members[right as usize]);
            let drop = it - nl / nt * il - nr / nt * ir;
            out[feature] += nt / total * drop.max(0.0);
        }
    }
    out
}

/// Quantile with linear interpolation between order statistics at rank
/// p·(n−1), found by scanning rather than indexing.
pub fn linear_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = p * (v.len() - 1) as f64;
    let mut below = v[0];
    let mut above = v[v.len() - 1];
    let mut hb = 0.0;
    for (k, &x) in v.iter().enumerate() {
        if k as f64 <= h {
            below = x;
            hb = k as f64;
        }
        if k as f64 >= h {
            above = x;
            break;
        }
    }
    below + (h - hb) * (above - below)
}

/// Least-squares line by solving the 2×2 normal equations exactly.
/// Inputs must be exactly representable as ratios of i64 (e.g. integers or
/// short binary fractions).
pub fn normal_equations(x: &[f64], y: &[f64]) -> (f64, f64) {
    let r = |v: f64| BigRational::from_float(v).expect("finite");
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let sx: BigRational = x.iter().map(|&v| r(v)).sum();
    let sy: BigRational = y.iter().map(|&v| r(v)).sum();
    let sxx: BigRational = x.iter().map(|&v| r(v) * r(v)).sum();
    let sxy: BigRational = x.iter().zip(y).map(|(&a, &b)| r(a) * r(b)).sum();
    let det = &n * &sxx - &sx * &sx;
    let slope = (&n * &sxy - &sx * &sy) / &det;
    let intercept = (&sxx * &sy - &sx * &sxy) / &det;
    (slope.to_f64().unwrap(), intercept.to_f64().unwrap())
}
