//! Random forest classifier for binary outcomes with Gini splitting and
//! mean-decrease-in-impurity feature importance.
//!
//! Randomness is keyed rather than streamed: the bootstrap of tree `t` is drawn
//! from `(seed, t)`, and the feature order examined at node `n` of tree `t`
//! comes from hashing `(seed, t, n, feature key)`. Feature keys default to the
//! column index; callers that pass name-derived keys get a model that does not
//! depend on column order.

mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Scalar;

pub use tree::{DecisionTree, Node};

/// Number of features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `ceil(sqrt(p))`
    Sqrt,
    /// `ceil(log2(p))`, at least 1
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let p = n_features.max(1);
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (p as f64).log2().ceil() as usize,
            MaxFeatures::All => p,
            MaxFeatures::Count(n) => n,
        };
        k.clamp(1, p)
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            "all" => Ok(MaxFeatures::All),
            n => n
                .parse()
                .map(MaxFeatures::Count)
                .map_err(|_| Error::InvalidParameter(format!("max_features `{s}`: expected sqrt, log2, all or a count"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    /// Draw an n-sized bootstrap per tree; when false every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 300, max_features: MaxFeatures::Sqrt, min_samples_leaf: 1, max_depth: None, bootstrap: true }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(Error::InvalidParameter("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub trees: Vec<DecisionTree<T>>,
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
    pub feature_keys: Vec<u64>,
}

fn validate_training<T: Scalar>(x: &Matrix<T>, y: &[bool]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch { expected: x.nrows(), found: y.len() });
    }
    if x.nrows() < 2 {
        return Err(Error::Empty("at least two training rows are required"));
    }
    if x.ncols() == 0 {
        return Err(Error::Empty("at least one feature is required"));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass);
    }
    for r in 0..x.nrows() {
        if let Some(c) = x.row(r).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }
    Ok(())
}

impl<T: Scalar> Forest<T> {
    /// Fit with feature keys equal to column indices.
    pub fn fit(x: &Matrix<T>, y: &[bool], params: &ForestParams, seed: u64) -> Result<Self> {
        let keys: Vec<u64> = (0..x.ncols() as u64).collect();
        Self::fit_with_keys(x, y, params, seed, &keys)
    }

    /// Fit with caller-supplied per-column keys (must be distinct).
    pub fn fit_with_keys(x: &Matrix<T>, y: &[bool], params: &ForestParams, seed: u64, keys: &[u64]) -> Result<Self> {
        params.validate()?;
        validate_training(x, y)?;
        if keys.len() != x.ncols() {
            return Err(Error::ShapeMismatch { expected: x.ncols(), found: keys.len() });
        }
        let mut sorted = keys.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("feature keys must be distinct".into()));
        }
        let n = x.nrows();
        let max_features = params.max_features.resolve(x.ncols());
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let samples = if params.bootstrap {
                    let mut r = rng::stream(seed, &[0xB007, t as u64]);
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                tree::grow(x, y, samples, params, max_features, seed, t as u64, keys)
            })
            .collect();
        Ok(Self { trees, n_features: x.ncols(), params: params.clone(), seed, feature_keys: keys.to_vec() })
    }

    /// Mean over trees of the reached leaf's positive fraction, per row.
    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if x.ncols() != self.n_features {
            return Err(Error::ShapeMismatch { expected: self.n_features, found: x.ncols() });
        }
        let n_trees = T::from_usize_lossy(self.trees.len());
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|r| {
                let row = x.row(r);
                self.trees.iter().map(|t| t.leaf_fraction(row)).fold(T::zero(), |a, b| a + b) / n_trees
            })
            .collect())
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let n_trees = T::from_usize_lossy(self.trees.len());
        self.trees.iter().map(|t| t.leaf_fraction(row)).fold(T::zero(), |a, b| a + b) / n_trees
    }

    /// Mean decrease in Gini impurity per feature: each tree's contributions
    /// are normalised to sum to one, averaged over trees that split at least
    /// once, then renormalised. All zeros when no tree splits.
    pub fn gini_importance(&self) -> Vec<T> {
        let p = self.n_features;
        let mut acc = vec![T::zero(); p];
        let mut used = 0usize;
        for tree in &self.trees {
            let total: T = tree.raw_importance.iter().copied().sum();
            if total <= T::zero() {
                continue;
            }
            used += 1;
            for (a, &v) in acc.iter_mut().zip(&tree.raw_importance) {
                *a = *a + v / total;
            }
        }
        if used == 0 {
            return acc;
        }
        let n = T::from_usize_lossy(used);
        acc.iter_mut().for_each(|a| *a = *a / n);
        let total: T = acc.iter().copied().sum();
        if total > T::zero() {
            acc.iter_mut().for_each(|a| *a = *a / total);
        }
        acc
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
