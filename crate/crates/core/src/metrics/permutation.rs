//! Paired permutation test between two models scored on the same patients.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::{auroc, precision_recall, roc_curve};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Null differences within this distance of the observed one count as `>=`.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    Precision,
    Recall,
    TprAtFpr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Auroc, Metric::Precision, Metric::Recall, Metric::TprAtFpr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::TprAtFpr => "tpr_at_fpr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{s}` (auroc, precision, recall, tpr_at_fpr)")))
    }
}

/// Thresholds used by the threshold-dependent metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Positive prediction when `score > threshold`.
    pub threshold: f64,
    pub target_fpr: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { threshold: 0.5, target_fpr: 0.10 }
    }
}

pub fn compute_metric<T: Scalar>(metric: Metric, scores: &[T], labels: &[bool], params: &MetricParams) -> Result<f64> {
    Ok(match metric {
        Metric::Auroc => auroc(scores, labels)?.as_f64(),
        Metric::Precision => precision_recall(scores, labels, T::from_f64_lossy(params.threshold))?.0.as_f64(),
        Metric::Recall => precision_recall(scores, labels, T::from_f64_lossy(params.threshold))?.1.as_f64(),
        Metric::TprAtFpr => roc_curve(scores, labels)?.tpr_at_fpr(T::from_f64_lossy(params.target_fpr))?.as_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub metric: Metric,
    pub metric_a: f64,
    pub metric_b: f64,
    /// `metric(a) - metric(b)`.
    pub observed_diff: f64,
    /// One-sided: `(1 + #{null >= observed}) / (n + 1)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub params: MetricParams,
    pub null: NullSummary,
}

/// One-sided paired test of `metric(a) > metric(b)`. Each replicate swaps the
/// two models' scores independently per patient with probability 1/2; the
/// randomness of replicate `r` comes from `(seed, r)`.
pub fn permutation_test<T: Scalar>(
    scores_a: &[T],
    scores_b: &[T],
    labels: &[bool],
    metric: Metric,
    params: &MetricParams,
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationTestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::ShapeMismatch { expected: scores_a.len(), found: scores_b.len() });
    }
    if scores_a.len() != labels.len() {
        return Err(Error::ShapeMismatch { expected: labels.len(), found: scores_a.len() });
    }
    if n_permutations == 0 {
        return Err(Error::InvalidParameter("at least one permutation is required".into()));
    }
    let metric_a = compute_metric(metric, scores_a, labels, params)?;
    let metric_b = compute_metric(metric, scores_b, labels, params)?;
    let observed = metric_a - metric_b;

    let null: Vec<f64> = (0..n_permutations)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, &[0x9E2_u64, r as u64]);
            let mut a = scores_a.to_vec();
            let mut b = scores_b.to_vec();
            for i in 0..a.len() {
                if g.random::<bool>() {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
            }
            compute_metric(metric, &a, labels, params).and_then(|ma| Ok(ma - compute_metric(metric, &b, labels, params)?))
        })
        .collect::<Result<_>>()?;

    let exceed = null.iter().filter(|&&d| d >= observed - TIE_EPS).count();
    let p_value = (1 + exceed) as f64 / (n_permutations + 1) as f64;
    Ok(PermutationTestResult {
        metric,
        metric_a,
        metric_b,
        observed_diff: observed,
        p_value,
        n_permutations,
        seed,
        params: *params,
        null: summarize(&null),
    })
}

fn summarize(values: &[f64]) -> NullSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    NullSummary {
        mean,
        std,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        q95: crate::biomarkers::percentile_sorted(&sorted, 0.95),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_scores_give_large_p() {
        let s = [0.1, 0.7, 0.3, 0.9, 0.5, 0.2];
        let l = [false, true, false, true, true, false];
        let r = permutation_test(&s, &s, &l, Metric::Auroc, &MetricParams::default(), 500, 1).unwrap();
        assert_eq!(r.observed_diff, 0.0);
        assert!(r.p_value >= 0.5);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = [0.9, 0.8, 0.7, 0.2, 0.4, 0.1, 0.6, 0.3];
        let b = [0.5, 0.4, 0.6, 0.5, 0.3, 0.2, 0.6, 0.7];
        let l = [true, true, true, false, false, false, true, false];
        let p = MetricParams::default();
        let r1 = permutation_test(&a, &b, &l, Metric::Auroc, &p, 2000, 42).unwrap();
        let r2 = permutation_test(&a, &b, &l, Metric::Auroc, &p, 2000, 42).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.p_value >= 1.0 / 2001.0);
    }

    #[test]
    fn swapped_inputs_negate_observed() {
        let a = [0.9, 0.8, 0.7, 0.2, 0.4, 0.1, 0.6, 0.3];
        let b = [0.5, 0.4, 0.6, 0.5, 0.3, 0.2, 0.6, 0.7];
        let l = [true, true, true, false, false, false, true, false];
        let p = MetricParams::default();
        let ab = permutation_test(&a, &b, &l, Metric::Auroc, &p, 4000, 3).unwrap();
        let ba = permutation_test(&b, &a, &l, Metric::Auroc, &p, 4000, 3).unwrap();
        assert_eq!(ab.observed_diff, -ba.observed_diff);
        assert!(ab.p_value < 0.5 && ba.p_value > 0.5);
        // the swap null is symmetric, so the two one-sided p-values cover at least everything
        assert!(ab.p_value + ba.p_value >= 1.0 - 0.03);
    }

    #[test]
    fn errors() {
        let p = MetricParams::default();
        assert!(matches!(
            permutation_test(&[0.1, 0.2], &[0.1], &[true, false], Metric::Auroc, &p, 10, 0),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(permutation_test(&[0.1, 0.2], &[0.1, 0.3], &[true, false], Metric::Auroc, &p, 0, 0).is_err());
        assert_eq!("tpr_at_fpr".parse::<Metric>().unwrap(), Metric::TprAtFpr);
        assert!("f1".parse::<Metric>().is_err());
    }
}
