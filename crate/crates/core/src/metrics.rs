//! Point and interval evaluation metrics.
//!
//! PICP is kept as a fraction in `[0, 1]`; it is rendered as a percentage only
//! in reports. Sample standard deviations use the `n − 1` denominator.

use serde::{Deserialize, Serialize};

use crate::dataset::TargetScale;
use crate::error::{Error, Result};
use crate::forest::PredictionInterval;
use crate::scalar::{mean, sample_std, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics<T> {
    pub rmse: T,
    pub mae: T,
    /// Percent.
    pub mape: T,
    pub pseudo_r2: T,
    /// Coefficient of variation of absolute errors, percent.
    pub cv_error: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics<T> {
    pub picp: T,
    pub naw: T,
    pub rai: T,
    pub winkler_mean: T,
    /// Percent.
    pub cv_width: T,
    pub coverage_level: T,
    pub scale: TargetScale,
}

/// Per-observation intervals with their aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport<T> {
    pub intervals: Vec<PredictionInterval<T>>,
    pub metrics: IntervalMetrics<T>,
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

fn check_bounds<T: Scalar>(y: &[T], lower: &[T], upper: &[T]) -> Result<()> {
    same_len(y.len(), lower.len())?;
    same_len(y.len(), upper.len())?;
    if let Some(i) = lower.iter().zip(upper).position(|(l, u)| l > u) {
        return Err(Error::invalid(format!("lower bound exceeds upper bound at {i}")));
    }
    Ok(())
}

pub fn point_metrics<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Result<PointMetrics<T>> {
    same_len(y_true.len(), y_pred.len())?;
    if y_true.len() < 2 {
        return Err(Error::EmptyDataset("point metrics need at least 2 observations".into()));
    }
    if let Some(i) = y_true.iter().position(|v| v.is_zero()) {
        return Err(Error::Degenerate(format!("zero true value at {i}; MAPE undefined")));
    }
    let n = T::from_usize_lossy(y_true.len());
    let abs_err: Vec<T> = y_true.iter().zip(y_pred).map(|(&a, &b)| (a - b).abs()).collect();
    let sse: T = abs_err.iter().map(|&e| e * e).sum();
    let mae = abs_err.iter().copied().sum::<T>() / n;
    let mape = T::lit(100.0) * abs_err.iter().zip(y_true).map(|(&e, &y)| e / y.abs()).sum::<T>() / n;
    let y_mean = mean(y_true).unwrap_or_else(T::zero);
    let sst: T = y_true.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum();
    if sst.is_zero() {
        return Err(Error::Degenerate("constant true values; pseudo-R² undefined".into()));
    }
    let cv_error = if mae.is_zero() {
        log::warn!("zero mean absolute error; reporting cv_error = 0");
        T::zero()
    } else {
        T::lit(100.0) * sample_std(&abs_err).unwrap_or_else(T::zero) / mae
    };
    Ok(PointMetrics {
        rmse: (sse / n).sqrt(),
        mae,
        mape,
        pseudo_r2: T::one() - sse / sst,
        cv_error,
    })
}

/// `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`.
pub fn pseudo_r2<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Result<T> {
    same_len(y_true.len(), y_pred.len())?;
    let y_mean = mean(y_true).ok_or_else(|| Error::EmptyDataset("pseudo-R² of no observations".into()))?;
    let sst: T = y_true.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum();
    if sst.is_zero() {
        return Err(Error::Degenerate("constant true values; pseudo-R² undefined".into()));
    }
    let sse: T = y_true.iter().zip(y_pred).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(T::one() - sse / sst)
}

/// Fraction of observations inside their closed interval.
pub fn picp<T: Scalar>(y_true: &[T], lower: &[T], upper: &[T]) -> Result<T> {
    check_bounds(y_true, lower, upper)?;
    if y_true.is_empty() {
        return Err(Error::EmptyDataset("picp of no observations".into()));
    }
    let covered = y_true
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(y, (l, u))| l <= y && y <= u)
        .count();
    Ok(T::from_usize_lossy(covered) / T::from_usize_lossy(y_true.len()))
}

/// Mean interval width divided by the range of the true values.
pub fn naw<T: Scalar>(y_true: &[T], lower: &[T], upper: &[T]) -> Result<T> {
    check_bounds(y_true, lower, upper)?;
    let (lo, hi) = y_true
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), &y| (a.min(y), b.max(y)));
    let range = hi - lo;
    if !(range > T::zero()) {
        return Err(Error::Degenerate("range of true values is zero".into()));
    }
    let widths: Vec<T> = lower.iter().zip(upper).map(|(&l, &u)| (u - l) / range).collect();
    Ok(mean(&widths).unwrap_or_else(T::zero))
}

/// `w1 / naw + w2 · picp` with PICP as a fraction.
pub fn rai<T: Scalar>(naw: T, picp: T, w1: T, w2: T) -> Result<T> {
    if !(naw > T::zero()) {
        return Err(Error::invalid(format!("naw must be > 0, got {naw}")));
    }
    if ((w1 + w2) - T::one()).abs() > T::lit(1e-12).max(T::epsilon()) {
        return Err(Error::invalid(format!("weights must sum to 1, got {w1} + {w2}")));
    }
    if !(picp >= T::zero() && picp <= T::one()) {
        return Err(Error::invalid(format!("picp must be a fraction, got {picp}")));
    }
    Ok(w1 / naw + w2 * picp)
}

/// RAI with equal weights.
pub fn rai_default<T: Scalar>(naw: T, picp: T) -> Result<T> {
    rai(naw, picp, T::lit(0.5), T::lit(0.5))
}

/// Winkler interval score with `α = 1 − coverage`: the width, plus
/// `(2/α)·distance` to the violated bound for uncovered observations.
/// Returns the mean and per-observation scores.
pub fn winkler<T: Scalar>(y_true: &[T], lower: &[T], upper: &[T], coverage: T) -> Result<(T, Vec<T>)> {
    if !(coverage > T::zero() && coverage < T::one()) {
        return Err(Error::invalid(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    check_bounds(y_true, lower, upper)?;
    if y_true.is_empty() {
        return Err(Error::EmptyDataset("winkler score of no observations".into()));
    }
    let alpha = T::one() - coverage;
    let penalty = T::lit(2.0) / alpha;
    let scores: Vec<T> = y_true
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&y, (&l, &u))| {
            let w = u - l;
            if y < l {
                w + penalty * (l - y)
            } else if y > u {
                w + penalty * (y - u)
            } else {
                w
            }
        })
        .collect();
    Ok((mean(&scores).unwrap_or_else(T::zero), scores))
}

/// Coefficient of variation of interval widths, percent.
pub fn cv_width<T: Scalar>(lower: &[T], upper: &[T]) -> Result<T> {
    same_len(lower.len(), upper.len())?;
    let widths: Vec<T> = lower.iter().zip(upper).map(|(&l, &u)| u - l).collect();
    let m = mean(&widths).unwrap_or_else(T::zero);
    if !(m > T::zero()) {
        return Err(Error::Degenerate("mean interval width is zero".into()));
    }
    let sd = sample_std(&widths).unwrap_or_else(T::zero);
    Ok(T::lit(100.0) * sd / m)
}

/// All interval metrics for one set of intervals.
pub fn interval_metrics<T: Scalar>(
    y_true: &[T],
    intervals: &[PredictionInterval<T>],
    coverage: T,
    scale: TargetScale,
) -> Result<IntervalMetrics<T>> {
    let lower: Vec<T> = intervals.iter().map(|p| p.lower).collect();
    let upper: Vec<T> = intervals.iter().map(|p| p.upper).collect();
    let picp = picp(y_true, &lower, &upper)?;
    let naw = naw(y_true, &lower, &upper)?;
    let rai = rai_default(naw, picp)?;
    let (winkler_mean, _) = winkler(y_true, &lower, &upper, coverage)?;
    let cv_width = cv_width(&lower, &upper)?;
    Ok(IntervalMetrics {
        picp,
        naw,
        rai,
        winkler_mean,
        cv_width,
        coverage_level: coverage,
        scale,
    })
}

pub fn interval_report<T: Scalar>(
    y_true: &[T],
    intervals: Vec<PredictionInterval<T>>,
    coverage: T,
    scale: TargetScale,
) -> Result<IntervalReport<T>> {
    let metrics = interval_metrics(y_true, &intervals, coverage, scale)?;
    Ok(IntervalReport { intervals, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [1.0, 2.0, 4.0];
        let m = point_metrics(&y, &y).unwrap();
        assert_eq!((m.rmse, m.mae, m.pseudo_r2, m.cv_error), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn mean_prediction_has_zero_r2() {
        let y = [1.0, 2.0, 6.0];
        let m = point_metrics(&y, &[3.0; 3]).unwrap();
        assert_eq!(m.pseudo_r2, 0.0);
    }

    #[test]
    fn hand_computed_point_metrics() {
        let m = point_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert!((m.rmse - 3f64.sqrt()).abs() < 1e-15);
        assert!((m.pseudo_r2 + 3.5).abs() < 1e-15);
        assert!((m.mape - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn point_metric_errors() {
        assert!(point_metrics(&[1.0, 2.0], &[1.0]).is_err());
        assert!(point_metrics(&[0.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn picp_examples() {
        assert_eq!(picp(&[1.0, 2.0], &[0.0, 2.0], &[1.0, 3.0]).unwrap(), 1.0);
        let p: f64 = picp(&[1.0, 5.0, 10.0], &[0.0, 6.0, 9.0], &[2.0, 7.0, 11.0]).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        assert!(picp(&[1.0], &[2.0], &[1.0]).is_err());
    }

    #[test]
    fn naw_examples() {
        assert_eq!(naw(&[0.0, 4.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(naw(&[0.0, 4.0], &[0.0, 0.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(naw(&[2.0, 2.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rai_examples() {
        assert_eq!(rai_default(1.0, 1.0).unwrap(), 1.0);
        assert!((rai_default::<f64>(0.5, 0.9).unwrap() - 1.45).abs() < 1e-15);
        assert!(rai_default(0.0, 0.9).is_err());
        assert!(rai(0.5, 0.9, 0.6, 0.6).is_err());
    }

    #[test]
    fn winkler_cases() {
        let (m, s) = winkler(&[3.0], &[2.0], &[4.0], 0.85).unwrap();
        assert_eq!((m, s[0]), (2.0, 2.0));
        let (m, _) = winkler::<f64>(&[1.0], &[2.0], &[4.0], 0.85).unwrap();
        assert!((m - (2.0 + 2.0 / 0.15)).abs() < 1e-12);
        let (m, _) = winkler(&[5.0], &[2.0], &[4.0], 0.5).unwrap();
        assert_eq!(m, 2.0 + 4.0);
        assert!(winkler(&[5.0], &[2.0], &[4.0], 1.0).is_err());
    }

    #[test]
    fn cv_width_examples() {
        assert_eq!(cv_width(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        let c = cv_width(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        assert!((c - 100.0 * 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(cv_width(&[1.0], &[1.0]).is_err());
    }
}
