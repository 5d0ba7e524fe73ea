//! ROC analysis and threshold metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// ROC polyline from `(0, 0)` to `(1, 1)`.
///
/// `thresholds[i]` is the score cut that produces point `i` (a row is
/// predicted positive when its score is `>=` the cut); `thresholds[0]` is
/// `+inf`. Tied scores move the curve in a single step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RocCurve<T> {
    #[serde(with = "nonfinite_as_null")]
    pub thresholds: Vec<T>,
    pub fpr: Vec<T>,
    pub tpr: Vec<T>,
    pub auroc: T,
}

mod nonfinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::scalar::Scalar;

    pub fn serialize<T: Scalar, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let v = Vec::<Option<T>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or_else(T::infinity)).collect())
    }
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

fn check_inputs<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch { expected: labels.len(), found: scores.len() });
    }
    if let Some(row) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { row, col: 0 });
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(score+ > score-) + P(tie) / 2`, computed from mid-ranks.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are not NaN"));

    // rank sum of positives, with ties sharing their mean rank (kept doubled to stay integral)
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, mean (i + j + 2) / 2
        let doubled_mean = (i + j + 2) as u128;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += positives * doubled_mean;
        i = j + 1;
    }
    let n_pos_u = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos_u * (n_pos_u + 1);
    let denom = 2 * n_pos_u * n_neg as u128;
    Ok(T::from_f64_lossy(doubled_u as f64 / denom as f64))
}

/// ROC curve with one point per distinct score.
pub fn roc_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<RocCurve<T>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("scores are not NaN"));

    let (np, nn) = (T::from_usize_lossy(n_pos), T::from_usize_lossy(n_neg));
    let mut thresholds = vec![T::infinity()];
    let mut fpr = vec![T::zero()];
    let mut tpr = vec![T::zero()];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        fpr.push(T::from_usize_lossy(fp) / nn);
        tpr.push(T::from_usize_lossy(tp) / np);
    }
    let auroc = trapezoid(&fpr, &tpr);
    Ok(RocCurve { thresholds, fpr, tpr, auroc })
}

pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) * T::half())
        .fold(T::zero(), |a, b| a + b)
}

impl<T: Scalar> RocCurve<T> {
    /// TPR at a fixed FPR by linear interpolation along the polyline, taking
    /// the top of any vertical segment that sits exactly at `target`.
    pub fn tpr_at_fpr(&self, target: T) -> Result<T> {
        if !(target >= T::zero() && target <= T::one()) {
            return Err(Error::InvalidParameter(format!("target FPR {target} outside [0, 1]")));
        }
        let last = self.fpr.iter().rposition(|&f| f <= target).unwrap_or(0);
        let (f0, t0) = (self.fpr[last], self.tpr[last]);
        match (self.fpr.get(last + 1), self.tpr.get(last + 1)) {
            (Some(&f1), Some(&t1)) if f1 > f0 => Ok(t0 + (t1 - t0) * (target - f0) / (f1 - f0)),
            _ => Ok(t0),
        }
    }
}

pub fn tpr_at_fpr<T: Scalar>(roc: &RocCurve<T>, target: T) -> Result<T> {
    roc.tpr_at_fpr(target)
}

/// Precision and recall with positives predicted when `score > threshold`.
/// Precision is 0 when nothing is predicted positive; recall is 0 when there
/// are no positive labels.
pub fn precision_recall<T: Scalar>(scores: &[T], labels: &[bool], threshold: T) -> Result<(T, T)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch { expected: labels.len(), found: scores.len() });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { T::zero() } else { T::from_usize_lossy(num) / T::from_usize_lossy(den) };
    Ok((ratio(tp, tp + fp), ratio(tp, tp + fn_)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn small_auroc_example() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        // 3 of the 4 positive-negative pairs are ordered correctly
        assert_eq!(brute_force(&s, &l), 0.75);
        assert_eq!(auroc(&s, &l).unwrap(), 0.75);
        assert_eq!(roc_curve(&s, &l).unwrap().auroc, 0.75);
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
        assert!(matches!(auroc(&[0.1], &[true, false]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn curve_shape() {
        let r: RocCurve<f64> = roc_curve(&[0.9, 0.9, 0.5, 0.2], &[true, false, true, false]).unwrap();
        assert_eq!(r.fpr, vec![0.0, 0.5, 0.5, 1.0]);
        assert_eq!(r.tpr, vec![0.0, 0.5, 1.0, 1.0]);
        assert_eq!(r.thresholds[1..], [0.9, 0.5, 0.2]);
        assert!(r.thresholds[0].is_infinite());
        assert_eq!(r.auroc, brute_force(&[0.9, 0.9, 0.5, 0.2], &[true, false, true, false]));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("null"));
        let back: RocCurve<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn tpr_interpolation() {
        let roc = RocCurve {
            thresholds: vec![f64::INFINITY, 0.9, 0.5, 0.1],
            fpr: vec![0.0, 0.05, 0.15, 1.0],
            tpr: vec![0.0, 0.4, 0.6, 1.0],
            auroc: 0.0,
        };
        assert!((roc.tpr_at_fpr(0.10).unwrap() - 0.5).abs() < 1e-12);
        assert!(roc.tpr_at_fpr(1.5).is_err());
        assert!(roc.tpr_at_fpr(-0.1).is_err());

        let perfect = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        for t in [0.01, 0.1, 0.5, 1.0] {
            assert_eq!(perfect.tpr_at_fpr(t).unwrap(), 1.0);
        }
        let diagonal = RocCurve { thresholds: vec![f64::INFINITY, 0.0], fpr: vec![0.0, 1.0], tpr: vec![0.0, 1.0], auroc: 0.5 };
        assert!((diagonal.tpr_at_fpr(0.10).unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn precision_recall_cases() {
        assert_eq!(precision_recall(&[0.9, 0.9, 0.1, 0.1], &[true, true, false, false], 0.5).unwrap(), (1.0, 1.0));
        assert_eq!(precision_recall(&[0.9, 0.1], &[false, true], 0.5).unwrap(), (0.0, 0.0));
        let (p, r): (f64, f64) = precision_recall(&[0.6, 0.6, 0.6, 0.4], &[true, true, false, true], 0.5).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (r - 2.0 / 3.0).abs() < 1e-15);
        // exactly at the threshold is negative
        assert_eq!(precision_recall(&[0.5], &[true], 0.5).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn single_precision() {
        let s = [0.1f32, 0.4, 0.35, 0.8];
        assert_eq!(auroc(&s, &[false, false, true, true]).unwrap(), 0.75f32);
    }
}
