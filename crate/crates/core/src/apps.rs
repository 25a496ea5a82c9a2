//! Congestion and collision-risk consumers of prediction intervals, plus
//! the simple width regressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::PredictionInterval;
use crate::scalar::{mean, sample_std, Scalar};

pub const DEFAULT_TRIM_THRESHOLD: f64 = 40.0;

/// Bureau of Public Roads volume-delay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct BprParams<T> {
    /// Free-flow travel time, minutes.
    pub t_f: T,
    /// Capacity flow.
    pub q_k: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> BprParams<T> {
    pub fn new(t_f: T, q_k: T) -> Result<Self> {
        let p = Self {
            t_f,
            q_k,
            alpha: T::lit(0.15),
            beta: T::lit(4.0),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_f > T::zero() && self.q_k > T::zero()) {
            return Err(Error::invalid("BPR t_f and q_k must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Serious,
    Slight,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Fatal, Severity::Serious, Severity::Slight];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Fatal => "fatal",
            Severity::Serious => "serious",
            Severity::Slight => "slight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RiskParams<T> {
    /// Base speed, mph.
    pub v_base: T,
    pub beta_fatal: T,
    pub beta_serious: T,
    pub beta_slight: T,
}

impl<T: Scalar> Default for RiskParams<T> {
    fn default() -> Self {
        Self {
            v_base: T::lit(40.0),
            beta_fatal: T::lit(3.6),
            beta_serious: T::lit(2.4),
            beta_slight: T::lit(1.2),
        }
    }
}

impl<T: Scalar> RiskParams<T> {
    pub fn beta(&self, severity: Severity) -> T {
        match severity {
            Severity::Fatal => self.beta_fatal,
            Severity::Serious => self.beta_serious,
            Severity::Slight => self.beta_slight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_base > T::zero()) {
            return Err(Error::invalid("v_base must be > 0"));
        }
        if Severity::ALL.iter().any(|&s| !(self.beta(s) > T::zero())) {
            return Err(Error::invalid("risk exponents must be > 0"));
        }
        Ok(())
    }
}

/// `(upper − lower) / median` on the count scale.
pub fn dlog_width<T: Scalar>(interval: &PredictionInterval<T>) -> Result<T> {
    if !(interval.median > T::zero()) {
        return Err(Error::invalid(format!("median must be > 0, got {}", interval.median)));
    }
    Ok((interval.upper - interval.lower) / interval.median)
}

/// Values not above `threshold`, in input order.
pub fn trim_extremes<T: Scalar>(values: &[T], threshold: T) -> Vec<T> {
    values.iter().copied().filter(|&v| v <= threshold).collect()
}

/// Drops the `k` largest values, keeping input order; among equal values
/// the later ones go first.
pub fn trim_largest<T: Scalar>(values: &[T], k: usize) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp_scalar(&values[a]).then(b.cmp(&a)));
    let mut keep = vec![true; values.len()];
    for &i in order.iter().take(k) {
        keep[i] = false;
    }
    values.iter().zip(keep).filter(|(_, k)| *k).map(|(&v, _)| v).collect()
}

trait TotalCmp {
    fn total_cmp_scalar(&self, other: &Self) -> std::cmp::Ordering;
}

impl<T: Scalar> TotalCmp for T {
    fn total_cmp_scalar(&self, other: &Self) -> std::cmp::Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }
}

/// `t_f · (1 + α · (q / q_k)^β)`.
pub fn bpr_time<T: Scalar>(params: &BprParams<T>, q: T) -> Result<T> {
    params.validate()?;
    if !(q >= T::zero()) {
        return Err(Error::invalid(format!("flow must be >= 0, got {q}")));
    }
    Ok(params.t_f * (T::one() + params.alpha * (q / params.q_k).powf(params.beta)))
}

/// Extra travel time when flow rises from `q_base` to `q_base · (1 + dlog)`.
pub fn travel_time_delta<T: Scalar>(params: &BprParams<T>, q_base: T, dlog: T) -> Result<T> {
    if !(dlog >= T::zero()) {
        return Err(Error::invalid(format!("dlog must be >= 0, got {dlog}")));
    }
    Ok(bpr_time(params, q_base * (T::one() + dlog))? - bpr_time(params, q_base)?)
}

/// Mean speed in miles per hour over a link of `length` miles traversed in
/// `minutes`.
pub fn speed_mph<T: Scalar>(length: T, minutes: T) -> Result<T> {
    if !(minutes > T::zero() && length > T::zero()) {
        return Err(Error::invalid("length and travel time must be > 0"));
    }
    Ok(length / (minutes / T::lit(60.0)))
}

/// Relative collision risk `(v_after / v_base)^β`.
pub fn collision_delta_r<T: Scalar>(params: &RiskParams<T>, v_after: T, severity: Severity) -> Result<T> {
    params.validate()?;
    if !(v_after > T::zero()) {
        return Err(Error::invalid(format!("speed must be > 0, got {v_after}")));
    }
    Ok((v_after / params.v_base).powf(params.beta(severity)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct RiskSummary<T> {
    pub mean: T,
    pub variance: T,
    pub iqr: T,
}

/// Quantile by linear interpolation between order statistics at
/// position `p · (n − 1)`.
pub fn quantile_linear<T: Scalar>(sorted: &[T], p: T) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::EmptyDataset("quantile of no values".into()));
    }
    let pos = p * T::from_usize_lossy(sorted.len() - 1);
    let lo = pos.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let j = (i + 1).min(sorted.len() - 1);
    let frac = pos - lo;
    Ok(sorted[i] + frac * (sorted[j] - sorted[i]))
}

pub fn risk_summary<T: Scalar>(delta_rs: &[T]) -> Result<RiskSummary<T>> {
    let m = mean(delta_rs).ok_or_else(|| Error::EmptyDataset("risk summary of no values".into()))?;
    let sd = sample_std(delta_rs).unwrap_or_else(T::zero);
    let mut sorted = delta_rs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp_scalar(b));
    let iqr = quantile_linear(&sorted, T::lit(0.75))? - quantile_linear(&sorted, T::lit(0.25))?;
    Ok(RiskSummary {
        mean: m,
        variance: sd * sd,
        iqr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SimpleRegressionResult<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_std_error: T,
    pub r2: T,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x` with an intercept.
pub fn simple_regression<T: Scalar>(x: &[T], y: &[T]) -> Result<SimpleRegressionResult<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("regression needs at least 3 points"));
    }
    let mx = mean(x).unwrap_or_else(T::zero);
    let my = mean(y).unwrap_or_else(T::zero);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(Error::Degenerate("x has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: T = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let sigma2 = ssr / T::from_usize_lossy(n - 2);
    let r2 = if syy > T::zero() {
        (T::one() - ssr / syy).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    Ok(SimpleRegressionResult {
        slope,
        intercept,
        slope_std_error: (sigma2 / sxx).sqrt(),
        r2,
        n,
    })
}

/// Single-link congestion scenario: free-flow time, capacity, base flow and
/// link length used to turn interval widths into travel-time and speed
/// changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Scenario<T> {
    pub bpr: BprParams<T>,
    pub risk: RiskParams<T>,
    pub q_base: T,
    /// Miles.
    pub link_length: T,
}

impl<T: Scalar> Default for Scenario<T> {
    fn default() -> Self {
        Self {
            bpr: BprParams {
                t_f: T::lit(15.0),
                q_k: T::lit(100.0),
                alpha: T::lit(0.15),
                beta: T::lit(4.0),
            },
            risk: RiskParams::default(),
            q_base: T::lit(20.0),
            link_length: T::lit(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct LinkImpact<T> {
    pub dlog: T,
    pub time_base: T,
    pub time_max: T,
    pub delta_t: T,
    pub speed_max: T,
    pub delta_r_fatal: T,
    pub delta_r_serious: T,
    pub delta_r_slight: T,
}

impl<T: Scalar> LinkImpact<T> {
    pub fn delta_r(&self, severity: Severity) -> T {
        match severity {
            Severity::Fatal => self.delta_r_fatal,
            Severity::Serious => self.delta_r_serious,
            Severity::Slight => self.delta_r_slight,
        }
    }
}

/// Travel time and collision risk when the link carries the upper end of
/// its interval instead of the base flow.
pub fn link_impact<T: Scalar>(scenario: &Scenario<T>, dlog: T) -> Result<LinkImpact<T>> {
    let time_base = bpr_time(&scenario.bpr, scenario.q_base)?;
    let delta_t = travel_time_delta(&scenario.bpr, scenario.q_base, dlog)?;
    let time_max = time_base + delta_t;
    let speed_max = speed_mph(scenario.link_length, time_max)?;
    let r = |s| collision_delta_r(&scenario.risk, speed_max, s);
    Ok(LinkImpact {
        dlog,
        time_base,
        time_max,
        delta_t,
        speed_max,
        delta_r_fatal: r(Severity::Fatal)?,
        delta_r_serious: r(Severity::Serious)?,
        delta_r_slight: r(Severity::Slight)?,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct MeanSd<T> {
    pub mean: T,
    pub sd: T,
    pub n: usize,
}

pub fn mean_sd<T: Scalar>(values: &[T]) -> Result<MeanSd<T>> {
    Ok(MeanSd {
        mean: mean(values).ok_or_else(|| Error::EmptyDataset("mean of no values".into()))?,
        sd: sample_std(values).unwrap_or_else(T::zero),
        n: values.len(),
    })
}
