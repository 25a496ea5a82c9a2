use std::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::params::TreeParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: u32,
        right: u32,
    },
    /// `leaf_samples[start..start + n_samples]` are the in-bag rows of the leaf.
    Leaf { start: u32, value: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node<T> {
    pub n_samples: u32,
    /// Mean squared error of the in-bag targets at this node.
    pub impurity: T,
    pub kind: NodeKind<T>,
}

/// CART regression tree whose leaves keep the row indices of their in-bag
/// training samples (duplicates included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    pub nodes: Vec<Node<T>>,
    pub leaf_samples: Vec<u32>,
    pub n_features: usize,
}

impl<T: Scalar> RegressionTree<T> {
    /// Number of in-bag samples the tree was grown on.
    pub fn n_samples(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.n_samples as usize)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match nodes[i].kind {
                NodeKind::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                NodeKind::Leaf { .. } => 0,
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(&self.nodes, 0)
        }
    }

    /// Index of the leaf node reached by `x`.
    pub fn leaf_of(&self, x: &[T]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i].kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                NodeKind::Leaf { .. } => return i,
            }
        }
    }

    /// In-bag row indices of the leaf reached by `x`.
    pub fn leaf_members(&self, x: &[T]) -> &[u32] {
        let node = &self.nodes[self.leaf_of(x)];
        match node.kind {
            NodeKind::Leaf { start, .. } => {
                let s = start as usize;
                &self.leaf_samples[s..s + node.n_samples as usize]
            }
            NodeKind::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }

    /// Leaf-mean prediction.
    pub fn predict(&self, x: &[T]) -> T {
        match self.nodes[self.leaf_of(x)].kind {
            NodeKind::Leaf { value, .. } => value,
            NodeKind::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, .. } => Some(feature),
            NodeKind::Leaf { .. } => None,
        })
    }
}

/// Grows a tree on every row of `x`.
pub fn fit_tree<T: Scalar>(x: &Matrix<T>, y: &[T], params: &TreeParams, rng: &mut Rng) -> Result<RegressionTree<T>> {
    check_xy(x, y)?;
    let sample: Vec<u32> = (0..x.nrows() as u32).collect();
    fit_tree_on(x, y, sample, params, rng)
}

pub(crate) fn check_xy<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if y.is_empty() || x.nrows() == 0 {
        return Err(Error::EmptyDataset("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("no feature columns"));
    }
    if !x.as_slice().iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite value in training data"));
    }
    Ok(())
}

struct Best<T> {
    feature: usize,
    threshold: T,
    n_left: usize,
    gain: T,
}

/// Grows a tree on the given in-bag sample (row indices, duplicates allowed).
pub(crate) fn fit_tree_on<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    mut samples: Vec<u32>,
    params: &TreeParams,
    rng: &mut Rng,
) -> Result<RegressionTree<T>> {
    params.validate()?;
    let d = x.ncols();
    let mtry = params.max_features.count(d);
    let max_depth = params.max_depth.unwrap_or(usize::MAX);
    let mut nodes: Vec<Node<T>> = Vec::new();
    let mut buf: Vec<(T, T)> = Vec::with_capacity(samples.len());
    // (node index, start, end, depth)
    let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
    nodes.push(placeholder());

    while let Some((id, start, end, depth)) = stack.pop() {
        let n = end - start;
        let nt = T::from_usize_lossy(n);
        let part = &samples[start..end];
        let mean = part.iter().map(|&i| y[i as usize]).sum::<T>() / nt;
        let sse: T = part
            .iter()
            .map(|&i| {
                let r = y[i as usize] - mean;
                r * r
            })
            .sum();
        let constant = part.iter().all(|&i| y[i as usize] == y[part[0] as usize]);
        let impurity = sse / nt;

        let mut best: Option<Best<T>> = None;
        if depth < max_depth
            && n >= params.min_samples_split
            && n >= 2 * params.min_samples_leaf
            && !constant
        {
            let mut feats = index::sample(rng, d, mtry).into_vec();
            feats.sort_unstable();
            for f in feats {
                buf.clear();
                buf.extend(part.iter().map(|&i| (x.get(i as usize, f), y[i as usize] - mean)));
                buf.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
                let total: T = buf.iter().map(|p| p.1).sum();
                let mut left = T::zero();
                for p in 1..n {
                    left += buf[p - 1].1;
                    if p < params.min_samples_leaf || n - p < params.min_samples_leaf {
                        continue;
                    }
                    let (lo, hi) = (buf[p - 1].0, buf[p].0);
                    if !(lo < hi) {
                        continue;
                    }
                    let right = total - left;
                    let gain = left * left / T::from_usize_lossy(p) + right * right / T::from_usize_lossy(n - p);
                    if gain > best.as_ref().map_or(T::zero(), |b| b.gain) {
                        let mut thr = (lo + hi) / T::lit(2.0);
                        if !(thr < hi) {
                            thr = lo;
                        }
                        best = Some(Best {
                            feature: f,
                            threshold: thr,
                            n_left: p,
                            gain,
                        });
                    }
                }
            }
        }

        match best {
            None => {
                nodes[id] = Node {
                    n_samples: n as u32,
                    impurity,
                    kind: NodeKind::Leaf {
                        start: start as u32,
                        value: mean,
                    },
                };
            }
            Some(b) => {
                // stable partition keeps sample order deterministic
                let (l, r): (Vec<u32>, Vec<u32>) = samples[start..end]
                    .iter()
                    .partition(|&&i| x.get(i as usize, b.feature) <= b.threshold);
                debug_assert_eq!(l.len(), b.n_left);
                let mid = start + l.len();
                samples[start..mid].copy_from_slice(&l);
                samples[mid..end].copy_from_slice(&r);
                let left_id = nodes.len();
                nodes.push(placeholder());
                let right_id = nodes.len();
                nodes.push(placeholder());
                nodes[id] = Node {
                    n_samples: n as u32,
                    impurity,
                    kind: NodeKind::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left: left_id as u32,
                        right: right_id as u32,
                    },
                };
                // right pushed first so the left subtree is grown first
                stack.push((right_id, mid, end, depth + 1));
                stack.push((left_id, start, mid, depth + 1));
            }
        }
    }

    Ok(RegressionTree {
        nodes,
        leaf_samples: samples,
        n_features: d,
    })
}

fn placeholder<T: Scalar>() -> Node<T> {
    Node {
        n_samples: 0,
        impurity: T::zero(),
        kind: NodeKind::Leaf {
            start: 0,
            value: T::zero(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::MaxFeatures;
    use crate::seed::rng_from;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_columns(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn constant_target_single_leaf() {
        let t = fit_tree(&col(&[1., 2., 3.]), &[5., 5., 5.], &TreeParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[10.0]), 5.0);
    }

    #[test]
    fn depth_one_split_by_hand() {
        let params = TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        };
        let t = fit_tree(&col(&[1., 2., 3., 4.]), &[0., 0., 10., 10.], &params, &mut rng_from(0)).unwrap();
        match t.nodes[0].kind {
            NodeKind::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 2.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&[1.5]), 0.0);
        assert_eq!(t.predict(&[3.5]), 10.0);
        assert_eq!(t.nodes[0].impurity, 25.0);
    }

    #[test]
    fn min_samples_leaf_equal_n_gives_single_leaf() {
        let params = TreeParams {
            min_samples_leaf: 4,
            ..TreeParams::default()
        };
        let t = fit_tree(&col(&[1., 2., 3., 4.]), &[0., 1., 7., 3.], &params, &mut rng_from(0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[0.0]), 2.75);
    }

    #[test]
    fn leaves_respect_min_samples_leaf_and_cover_sample() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.3).sin()).collect();
        let params = TreeParams {
            min_samples_leaf: 3,
            max_features: MaxFeatures::Fraction(1.0),
            ..TreeParams::default()
        };
        let t = fit_tree(&col(&x), &y, &params, &mut rng_from(3)).unwrap();
        let mut covered = 0;
        for n in &t.nodes {
            if let NodeKind::Leaf { .. } = n.kind {
                assert!(n.n_samples >= 3);
                covered += n.n_samples;
            }
        }
        assert_eq!(covered, 50);
        let mut s = t.leaf_samples.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<u32>>());
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // two identical informative columns
        let a = [1., 2., 3., 4.];
        let x = Matrix::from_columns(&[a.to_vec(), a.to_vec()]).unwrap();
        let params = TreeParams {
            max_depth: Some(1),
            max_features: MaxFeatures::Fraction(1.0),
            ..TreeParams::default()
        };
        let t = fit_tree(&x, &[0., 0., 10., 10.], &params, &mut rng_from(0)).unwrap();
        assert!(matches!(t.nodes[0].kind, NodeKind::Split { feature: 0, .. }));
    }

    #[test]
    fn empty_input_rejected() {
        let x = Matrix::<f64>::zeros(0, 1);
        assert!(fit_tree(&x, &[], &TreeParams::default(), &mut rng_from(0)).is_err());
    }

    #[test]
    fn f32_midpoint_between_adjacent_values() {
        let lo = 1.0f32;
        let hi = f32::from_bits(lo.to_bits() + 1);
        let x = Matrix::from_columns(&[vec![lo, hi]]).unwrap();
        let t = fit_tree(&x, &[0.0f32, 1.0], &TreeParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.predict(&[lo]), 0.0);
        assert_eq!(t.predict(&[hi]), 1.0);
    }
}
