//! ROC/AUC, score histograms and experiment reports.
//!
//! Orientation: a higher score means "more out-of-distribution". Scores that
//! run the other way (ELBO) are negated by the caller.

pub mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{AucRow, ExperimentReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty score list: {0}")]
    Empty(&'static str),
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("bins must be >= 1")]
    NoBins,
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false_positive_rate, true_positive_rate)`, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn check(scores: &[f64], what: &'static str) -> Result<(), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty(what));
    }
    match scores.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(EvalError::NonFinite(v)),
        None => Ok(()),
    }
}

/// Sweeps a threshold from high to low over the union of scores. Tied in/out
/// scores move both rates at once, so the trapezoid gives them half credit.
///
/// The area is accumulated as an integer count of half pairs and divided once,
/// which makes it identical to the pair-counting statistic.
pub fn roc_auc(in_scores: &[f64], out_scores: &[f64]) -> Result<RocCurve, EvalError> {
    check(in_scores, "in-distribution")?;
    check(out_scores, "out-of-distribution")?;
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(out_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_in = in_scores.len() as u64;
    let n_out = out_scores.len() as u64;
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut points = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < all.len() {
        let value = all[i].0;
        let (prev_fp, prev_tp) = (fp, tp);
        while i < all.len() && all[i].0 == value {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += ((fp - prev_fp) as u128) * ((tp + prev_tp) as u128);
        points.push((fp as f64 / n_in as f64, tp as f64 / n_out as f64));
    }
    let auc = twice_area as f64 / (2 * n_in as u128 * n_out as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// `P(out > in) + ½ P(out = in)` by sorting and merging.
pub fn rank_auc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64, EvalError> {
    check(in_scores, "in-distribution")?;
    check(out_scores, "out-of-distribution")?;
    let mut ins = in_scores.to_vec();
    ins.sort_by(f64::total_cmp);
    let mut twice: u128 = 0;
    for &o in out_scores {
        let below = ins.partition_point(|&v| v < o) as u128;
        let not_above = ins.partition_point(|&v| v <= o) as u128;
        twice += 2 * below + (not_above - below);
    }
    Ok(twice as f64 / (2 * ins.len() as u128 * out_scores.len() as u128) as f64)
}

/// AUC under both orientations of a score, `(as_is, negated)`.
pub fn auc_both_orientations(in_scores: &[f64], out_scores: &[f64]) -> Result<(f64, f64), EvalError> {
    let a = roc_auc(in_scores, out_scores)?.auc;
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let b = roc_auc(&neg(in_scores), &neg(out_scores))?.auc;
    Ok((a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width bins spanning `[min, max]`; the last bin is closed. A constant
/// input gets unit-width bins starting half a unit below the value.
pub fn histogram(scores: &[f64], bins: usize) -> Result<Vec<HistogramBin>, EvalError> {
    check(scores, "histogram input")?;
    if bins == 0 {
        return Err(EvalError::NoBins);
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (start, width) = if hi > lo { (lo, (hi - lo) / bins as f64) } else { (lo - 0.5, 1.0) };
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let idx = ((s - start) / width).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            low: start + i as f64 * width,
            high: if i + 1 == bins && hi > lo { hi } else { start + (i + 1) as f64 * width },
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[1.0, 2.0], &[3.0, 4.0]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[1.0, 3.0], &[2.0, 4.0]).unwrap().auc, 0.75);
        assert!(roc_auc(&[], &[1.0]).is_err());
        assert!(roc_auc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn curve_shape() {
        let c = roc_auc(&[0.1, 0.4, 0.4, 0.9], &[0.4, 0.8, 1.0]).unwrap();
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        assert!(c.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        let trapezoid: f64 = c.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        assert!((trapezoid - c.auc).abs() < 1e-12);
        assert_eq!(rank_auc(&[0.1, 0.4, 0.4, 0.9], &[0.4, 0.8, 1.0]).unwrap(), c.auc);
    }

    #[test]
    fn both_orientations_sum_to_one() {
        let (a, b) = auc_both_orientations(&[1.0, 2.0, 2.0], &[2.0, 3.0]).unwrap();
        assert_eq!(a + b, 1.0);
    }

    #[test]
    fn histogram_counts() {
        let data: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = histogram(&data, 10).unwrap();
        assert!(h.iter().all(|b| b.count == 10));
        assert_eq!(h[0].low, 0.0);
        assert_eq!(h[9].high, 99.0);
        let single = histogram(&[3.0, 3.0], 4).unwrap();
        assert_eq!(single.iter().filter(|b| b.count > 0).count(), 1);
        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 0).is_err());
    }
}
