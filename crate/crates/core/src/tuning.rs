//! Cross-validated hyperparameter search: random search and Gaussian-process
//! Bayesian optimisation, scored by RAI or median RMSE.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestParams, MaxFeatures, TreeParams};
use crate::matrix::Matrix;
use crate::metrics::{naw, picp, rai_default, IntervalReport};
use crate::scalar::Scalar;
use crate::seed::{derive_named, derive_seed, rng_from, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    pub max_features: Vec<MaxFeatures>,
    pub max_depth: (usize, usize),
    pub min_samples_split: (usize, usize),
    pub min_samples_leaf: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_estimators: (30, 300),
            max_features: vec![
                MaxFeatures::Sqrt,
                MaxFeatures::Log2,
                MaxFeatures::Fraction(0.4),
                MaxFeatures::Fraction(0.5),
                MaxFeatures::Fraction(0.6),
            ],
            max_depth: (10, 50),
            min_samples_split: (2, 20),
            min_samples_leaf: (1, 15),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("n_estimators", self.n_estimators),
            ("max_depth", self.max_depth),
            ("min_samples_split", self.min_samples_split),
            ("min_samples_leaf", self.min_samples_leaf),
        ] {
            if lo > hi {
                return Err(Error::invalid(format!("empty {name} range [{lo}, {hi}]")));
            }
        }
        if self.n_estimators.0 == 0 || self.max_depth.0 == 0 || self.min_samples_leaf.0 == 0 {
            return Err(Error::invalid("n_estimators, max_depth and min_samples_leaf must start at >= 1"));
        }
        if self.min_samples_split.0 < 2 {
            return Err(Error::invalid("min_samples_split must start at >= 2"));
        }
        if self.max_features.is_empty() {
            return Err(Error::invalid("max_features choices are empty"));
        }
        self.max_features.iter().try_for_each(|m| m.validate())
    }

    pub fn dimensions(&self) -> Vec<Dimension> {
        let int = |(lo, hi): (usize, usize)| Dimension::Integer {
            low: lo as i64,
            high: hi as i64,
        };
        vec![
            int(self.n_estimators),
            Dimension::Categorical(self.max_features.len()),
            int(self.max_depth),
            int(self.min_samples_split),
            int(self.min_samples_leaf),
        ]
    }

    /// Forest parameters for a point of [`Self::dimensions`].
    pub fn decode(&self, point: &[Value], seed: u64) -> Result<ForestParams> {
        let bad = || Error::invalid("point does not match the search space");
        let [Value::Int(n), Value::Cat(m), Value::Int(d), Value::Int(s), Value::Int(l)] = point else {
            return Err(bad());
        };
        let params = ForestParams {
            n_estimators: *n as usize,
            tree: TreeParams {
                max_depth: Some(*d as usize),
                min_samples_split: *s as usize,
                min_samples_leaf: *l as usize,
                max_features: *self.max_features.get(*m).ok_or_else(bad)?,
            },
            bootstrap: true,
            seed,
        };
        if !self.contains(&params) {
            return Err(bad());
        }
        Ok(params)
    }

    pub fn contains(&self, p: &ForestParams) -> bool {
        let within = |v: usize, (lo, hi): (usize, usize)| lo <= v && v <= hi;
        within(p.n_estimators, self.n_estimators)
            && p.tree.max_depth.is_some_and(|d| within(d, self.max_depth))
            && within(p.tree.min_samples_split, self.min_samples_split)
            && within(p.tree.min_samples_leaf, self.min_samples_leaf)
            && self.max_features.contains(&p.tree.max_features)
    }

    /// Uniform draw.
    pub fn sample(&self, rng: &mut Rng, seed: u64) -> ForestParams {
        let point = sample_point(&self.dimensions(), rng);
        self.decode(&point, seed).expect("sampled point lies in the space")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximise RAI of the validation intervals.
    Rai,
    /// Minimise RMSE of the validation medians.
    MedianRmse,
}

impl Objective {
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::Rai => a > b,
            Objective::MedianRmse => a < b,
        }
    }

    /// Score in the "larger is better" direction.
    fn utility(self, score: f64) -> f64 {
        match self {
            Objective::Rai => score,
            Objective::MedianRmse => -score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub n_iter: usize,
    pub cv_folds: usize,
    pub coverage: f64,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n_iter: 150,
            cv_folds: 5,
            coverage: 0.85,
            objective: Objective::Rai,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds must be >= 2"));
        }
        if self.n_iter == 0 {
            return Err(Error::invalid("n_iter must be >= 1"));
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(Error::invalid(format!("coverage must lie in (0, 1), got {}", self.coverage)));
        }
        Ok(())
    }

    /// Seed shared by every candidate forest, so trials differ only in
    /// their hyperparameters.
    pub fn forest_seed(&self) -> u64 {
        derive_named(self.seed, "forest")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    Random,
    Initial,
    ExpectedImprovement,
    /// Surrogate could not be fitted (e.g. identical scores).
    RandomFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: ForestParams,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub proposal: ProposalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ForestParams,
    pub best_trial: usize,
    pub best_score: f64,
    pub objective: Objective,
    pub trials: Vec<TrialRecord>,
}

fn best_of(trials: Vec<TrialRecord>, objective: Objective) -> Result<SearchResult> {
    let mut best: Option<&TrialRecord> = None;
    for t in &trials {
        if best.is_none_or(|b| objective.better(t.mean_score, b.mean_score)) {
            best = Some(t);
        }
    }
    let b = best.ok_or_else(|| Error::invalid("no trials"))?;
    Ok(SearchResult {
        best: b.params,
        best_trial: b.trial,
        best_score: b.mean_score,
        objective,
        trials: trials.clone(),
    })
}

/// One JSON object per line.
pub fn write_trials_jsonl<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io("<trials>", e))?;
    }
    Ok(())
}

pub fn read_trials_jsonl(text: &str) -> Result<Vec<TrialRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Shuffled k-fold split; the first `n % k` folds get one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::invalid("k must be >= 2"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut valid = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        valid.sort_unstable();
        train.sort_unstable();
        folds.push((train, valid));
        start += size;
    }
    Ok(folds)
}

fn fold_score<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    train: &[usize],
    valid: &[usize],
    params: &ForestParams,
    config: &TuneConfig,
) -> Result<f64> {
    let xt = x.select_rows(train);
    let yt: Vec<T> = train.iter().map(|&i| y[i]).collect();
    let xv = x.select_rows(valid);
    let yv: Vec<T> = valid.iter().map(|&i| y[i]).collect();
    let forest = fit_forest(&xt, &yt, params)?;
    match config.objective {
        Objective::Rai => {
            let iv = forest.predict_intervals(&xv, T::lit(config.coverage))?;
            let lo: Vec<T> = iv.iter().map(|p| p.lower).collect();
            let hi: Vec<T> = iv.iter().map(|p| p.upper).collect();
            let w = naw(&yv, &lo, &hi)?;
            let p = picp(&yv, &lo, &hi)?;
            // zero-width intervals have no finite RAI; score them below any real one
            Ok(if w > T::zero() { rai_default(w, p)?.as_f64() } else { 0.0 })
        }
        Objective::MedianRmse => {
            let med = forest.predict_quantile_batch(&xv, T::lit(0.5))?;
            let sse: f64 = yv
                .iter()
                .zip(&med)
                .map(|(&a, &b)| (a - b).as_f64().powi(2))
                .sum();
            Ok((sse / yv.len() as f64).sqrt())
        }
    }
}

/// Fold scores of `params`; fold `f` grows its forest from
/// `derive_seed(params.seed, f)`.
pub fn cross_validate<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    params: &ForestParams,
    config: &TuneConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    let folds = kfold_indices(y.len(), config.cv_folds, derive_named(config.seed, "kfold"))?;
    folds
        .par_iter()
        .enumerate()
        .map(|(f, (train, valid))| {
            let p = ForestParams {
                seed: derive_seed(params.seed, f as u64),
                ..*params
            };
            fold_score(x, y, train, valid, &p, config)
        })
        .collect()
}

fn trial<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    idx: usize,
    params: ForestParams,
    config: &TuneConfig,
    proposal: ProposalKind,
) -> Result<TrialRecord> {
    let fold_scores = cross_validate(x, y, &params, config)?;
    let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
    log::debug!("trial {idx}: {mean_score:.6} ({proposal:?})");
    Ok(TrialRecord {
        trial: idx,
        params,
        fold_scores,
        mean_score,
        proposal,
    })
}

fn check_data<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyDataset("tuning data has no rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    Ok(())
}

pub fn random_search<T: Scalar>(
    space: &SearchSpace,
    config: &TuneConfig,
    x: &Matrix<T>,
    y: &[T],
) -> Result<SearchResult> {
    space.validate()?;
    config.validate()?;
    check_data(x, y)?;
    let stream = derive_named(config.seed, "random_search");
    let seed = config.forest_seed();
    let trials = (0..config.n_iter)
        .into_par_iter()
        .map(|i| {
            let params = space.sample(&mut rng_from(derive_seed(stream, i as u64)), seed);
            trial(x, y, i, params, config, ProposalKind::Random)
        })
        .collect::<Result<Vec<_>>>()?;
    best_of(trials, config.objective)
}

pub fn bayes_search<T: Scalar>(
    space: &SearchSpace,
    config: &TuneConfig,
    x: &Matrix<T>,
    y: &[T],
) -> Result<SearchResult> {
    space.validate()?;
    config.validate()?;
    check_data(x, y)?;
    let seed = config.forest_seed();
    let mut opt = BayesOptimizer::new(
        space.dimensions(),
        initial_design_size(config.n_iter),
        derive_named(config.seed, "bayes_search"),
    );
    let mut trials = Vec::with_capacity(config.n_iter);
    for i in 0..config.n_iter {
        let (point, kind) = opt.ask();
        let rec = trial(x, y, i, space.decode(&point, seed)?, config, kind)?;
        opt.tell(point, config.objective.utility(rec.mean_score));
        trials.push(rec);
    }
    best_of(trials, config.objective)
}

/// `max(10, n_iter / 10)`.
pub fn initial_design_size(n_iter: usize) -> usize {
    (n_iter / 10).max(10)
}

/// Candidate with the largest RAI; the earliest wins ties.
pub fn select_by_rai<T: Scalar>(candidates: &[(ForestParams, IntervalReport<T>)]) -> Result<ForestParams> {
    let mut best: Option<&(ForestParams, IntervalReport<T>)> = None;
    for c in candidates {
        if best.is_none_or(|b| c.1.metrics.rai > b.1.metrics.rai) {
            best = Some(c);
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::invalid("no candidates to select from"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dimension {
    /// Inclusive integer range.
    Integer { low: i64, high: i64 },
    Real { low: f64, high: f64 },
    /// Number of choices.
    Categorical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Real(f64),
    Cat(usize),
}

fn unit(v: f64, low: f64, high: f64) -> f64 {
    if high > low {
        (v - low) / (high - low)
    } else {
        0.5
    }
}

fn encode(dims: &[Dimension], point: &[Value]) -> Vec<f64> {
    let mut out = Vec::new();
    for (d, v) in dims.iter().zip(point) {
        match (d, v) {
            (Dimension::Integer { low, high }, Value::Int(i)) => out.push(unit(*i as f64, *low as f64, *high as f64)),
            (Dimension::Real { low, high }, Value::Real(r)) => out.push(unit(*r, *low, *high)),
            (Dimension::Categorical(n), Value::Cat(c)) => out.extend((0..*n).map(|k| f64::from(u8::from(k == *c)))),
            _ => panic!("value {v:?} does not match dimension {d:?}"),
        }
    }
    out
}

fn sample_point(dims: &[Dimension], rng: &mut Rng) -> Vec<Value> {
    dims.iter()
        .map(|d| match *d {
            Dimension::Integer { low, high } => Value::Int(rng.random_range(low..=high)),
            Dimension::Real { low, high } => Value::Real(if high > low { rng.random_range(low..=high) } else { low }),
            Dimension::Categorical(n) => Value::Cat(rng.random_range(0..n)),
        })
        .collect()
}

/// Gaussian move of `scale` (in unit coordinates) on numeric dimensions and
/// an occasional category swap.
fn perturb(dims: &[Dimension], point: &[Value], scale: f64, rng: &mut Rng) -> Vec<Value> {
    dims.iter()
        .zip(point)
        .map(|(d, v)| {
            let step: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            match (*d, *v) {
                (Dimension::Integer { low, high }, Value::Int(i)) => {
                    let moved = i as f64 + step * (high - low) as f64;
                    Value::Int((moved.round() as i64).clamp(low, high))
                }
                (Dimension::Real { low, high }, Value::Real(r)) => Value::Real((r + step * (high - low)).clamp(low, high)),
                (Dimension::Categorical(n), Value::Cat(c)) => {
                    if rng.random_bool(0.2) {
                        Value::Cat(rng.random_range(0..n))
                    } else {
                        Value::Cat(c)
                    }
                }
                _ => *v,
            }
        })
        .collect()
}

fn matern52(r: f64, length: f64) -> f64 {
    let s = 5f64.sqrt() * r / length;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Zero-mean GP on standardised targets with unit amplitude.
struct Gp {
    xs: Vec<Vec<f64>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    length: f64,
}

const JITTER: f64 = 1e-6;
const LENGTH_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0];

impl Gp {
    /// Fits every grid length-scale and keeps the one with the largest
    /// marginal likelihood.
    fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<(Self, f64)> {
        let n = xs.len();
        let y = DVector::from_column_slice(ys);
        let mut best: Option<(Gp, f64)> = None;
        for &length in &LENGTH_GRID {
            let k = DMatrix::from_fn(n, n, |i, j| {
                matern52(dist(&xs[i], &xs[j]), length) + if i == j { JITTER } else { 0.0 }
            });
            let Some(chol) = k.cholesky() else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
            let lml = -0.5 * y.dot(&alpha) - log_det;
            if best.as_ref().is_none_or(|(_, b)| lml > *b) {
                best = Some((
                    Gp {
                        xs: xs.to_vec(),
                        chol,
                        alpha,
                        length,
                    },
                    lml,
                ));
            }
        }
        best
    }

    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| matern52(dist(xi, x), self.length)));
        let mu = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (1.0 + JITTER - k.dot(&v)).max(0.0);
        (mu, var.sqrt())
    }
}

fn expected_improvement(mu: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let imp = mu - best - xi;
    if sd <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    let n = Normal::standard();
    imp * n.cdf(z) + sd * n.pdf(z)
}

/// Ask/tell maximiser: random initial design, then expected improvement
/// under a Matérn-5/2 Gaussian process on unit-scaled, one-hot encoded
/// points.
#[derive(Debug)]
pub struct BayesOptimizer {
    dims: Vec<Dimension>,
    n_initial: usize,
    rng: Rng,
    observed: Vec<(Vec<Value>, f64)>,
    pub xi: f64,
    pub n_candidates: usize,
}

impl BayesOptimizer {
    pub fn new(dims: Vec<Dimension>, n_initial: usize, seed: u64) -> Self {
        Self {
            dims,
            n_initial: n_initial.max(1),
            rng: rng_from(seed),
            observed: Vec::new(),
            xi: 0.01,
            n_candidates: 512,
        }
    }

    pub fn observed(&self) -> &[(Vec<Value>, f64)] {
        &self.observed
    }

    /// Best observed point; the earliest wins ties.
    pub fn incumbent(&self) -> Option<&(Vec<Value>, f64)> {
        self.observed
            .iter()
            .fold(None, |b: Option<&(Vec<Value>, f64)>, o| match b {
                Some(b) if b.1 >= o.1 => Some(b),
                _ => Some(o),
            })
    }

    pub fn ask(&mut self) -> (Vec<Value>, ProposalKind) {
        if self.observed.len() < self.n_initial {
            return (sample_point(&self.dims, &mut self.rng), ProposalKind::Initial);
        }
        match self.propose() {
            Some(p) => (p, ProposalKind::ExpectedImprovement),
            None => (sample_point(&self.dims, &mut self.rng), ProposalKind::RandomFallback),
        }
    }

    pub fn tell(&mut self, point: Vec<Value>, score: f64) {
        self.observed.push((point, score));
    }

    fn propose(&mut self) -> Option<Vec<Value>> {
        let ys: Vec<f64> = self.observed.iter().map(|o| o.1).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let sd = (ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / ys.len() as f64).sqrt();
        if !(sd > 1e-12) || !sd.is_finite() {
            return None;
        }
        let zs: Vec<f64> = ys.iter().map(|y| (y - m) / sd).collect();
        let xs: Vec<Vec<f64>> = self.observed.iter().map(|o| encode(&self.dims, &o.0)).collect();
        let (gp, _) = Gp::fit(&xs, &zs)?;
        let best = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ei = |p: &[Value]| {
            let (mu, s) = gp.predict(&encode(&self.dims, p));
            expected_improvement(mu, s, best, self.xi)
        };

        let mut cands: Vec<(Vec<Value>, f64)> = (0..self.n_candidates)
            .map(|_| {
                let p = sample_point(&self.dims, &mut self.rng);
                let e = ei(&p);
                (p, e)
            })
            .collect();
        // local refinement starts from the best few candidates and the incumbent
        cands.sort_by(|a, b| b.1.total_cmp(&a.1));
        cands.truncate(5);
        if let Some(inc) = self.incumbent() {
            let p = inc.0.clone();
            let e = ei(&p);
            cands.push((p, e));
        }
        for (p, e) in cands.iter_mut() {
            for step in 0..24 {
                let scale = 0.1 * 0.85f64.powi(step);
                let q = perturb(&self.dims, p, scale, &mut self.rng);
                let eq = ei(&q);
                if eq > *e {
                    *p = q;
                    *e = eq;
                }
            }
        }
        let (p, e) = cands.into_iter().reduce(|a, b| if b.1 > a.1 { b } else { a })?;
        (e.is_finite()).then_some(p)
    }
}
