use serde::{Deserialize, Serialize};

use super::ForestParams;
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    /// Rows with `value <= threshold` go left.
    Split { feature: usize, threshold: T, left: u32, right: u32 },
    /// Bootstrap-weighted `[negative, positive]` counts.
    Leaf { counts: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DecisionTree<T> {
    pub nodes: Vec<Node<T>>,
    /// Unnormalised impurity decrease per feature, weighted by node sample fraction.
    pub raw_importance: Vec<T>,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn leaf_for(&self, row: &[T]) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn leaf_fraction(&self, row: &[T]) -> T {
        let [neg, pos] = self.leaf_for(row);
        T::from_usize_lossy(pos as usize) / T::from_usize_lossy((neg + pos) as usize)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[inline]
fn gini<T: Scalar>(neg: usize, pos: usize) -> T {
    let n = neg + pos;
    if n == 0 {
        return T::zero();
    }
    let n = T::from_usize_lossy(n);
    let (a, b) = (T::from_usize_lossy(neg) / n, T::from_usize_lossy(pos) / n);
    T::one() - a * a - b * b
}

struct Candidate<T> {
    feature: usize,
    threshold: T,
    decrease: T,
}

struct Builder<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [bool],
    params: &'a ForestParams,
    max_features: usize,
    seed: u64,
    tree: u64,
    keys: &'a [u64],
    n_total: usize,
    nodes: Vec<Node<T>>,
    importance: Vec<T>,
    scratch: Vec<(T, bool)>,
}

pub(super) fn grow<T: Scalar>(
    x: &Matrix<T>,
    y: &[bool],
    mut samples: Vec<usize>,
    params: &ForestParams,
    max_features: usize,
    seed: u64,
    tree: u64,
    keys: &[u64],
) -> DecisionTree<T> {
    let mut b = Builder {
        x,
        y,
        params,
        max_features,
        seed,
        tree,
        keys,
        n_total: samples.len(),
        nodes: Vec::new(),
        importance: vec![T::zero(); x.ncols()],
        scratch: Vec::with_capacity(samples.len()),
    };
    b.build(&mut samples, 0);
    DecisionTree { nodes: b.nodes, raw_importance: b.importance }
}

impl<T: Scalar> Builder<'_, T> {
    fn build(&mut self, samples: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let pos = samples.iter().filter(|&&i| self.y[i]).count();
        let neg = samples.len() - pos;
        self.nodes.push(Node::Leaf { counts: [neg as u32, pos as u32] });

        let min_leaf = self.params.min_samples_leaf;
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if pos == 0 || neg == 0 || samples.len() < 2 * min_leaf || !depth_ok {
            return id;
        }
        let Some(best) = self.best_split(samples, id, neg, pos) else {
            return id;
        };

        let weight = T::from_usize_lossy(samples.len()) / T::from_usize_lossy(self.n_total);
        self.importance[best.feature] = self.importance[best.feature] + weight * best.decrease;

        let mut split = 0;
        for i in 0..samples.len() {
            if self.x.get(samples[i], best.feature) <= best.threshold {
                samples.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = samples.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id as usize] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    /// Examine features in a per-node random order until `max_features`
    /// non-constant ones have been scored. Ties keep the earlier feature in
    /// that order, then the lower threshold.
    fn best_split(&mut self, samples: &[usize], node: u32, neg: usize, pos: usize) -> Option<Candidate<T>> {
        let mut order: Vec<(u64, usize)> = self
            .keys
            .iter()
            .enumerate()
            .map(|(f, &k)| (rng::mix(self.seed, &[0x5EED, self.tree, u64::from(node), k]), f))
            .collect();
        order.sort_unstable_by_key(|&(p, f)| (p, self.keys[f]));

        let n = samples.len();
        let parent = gini::<T>(neg, pos);
        let n_t = T::from_usize_lossy(n);
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Candidate<T>> = None;
        let mut examined = 0;

        for &(_, f) in &order {
            if examined == self.max_features {
                break;
            }
            self.scratch.clear();
            self.scratch.extend(samples.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            self.scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            if self.scratch[0].0 == self.scratch[n - 1].0 {
                continue;
            }
            examined += 1;

            let (mut ln, mut lp) = (0usize, 0usize);
            for i in 0..n - 1 {
                if self.scratch[i].1 {
                    lp += 1;
                } else {
                    ln += 1;
                }
                let (v, next) = (self.scratch[i].0, self.scratch[i + 1].0);
                if v == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let (rn, rp) = (neg - ln, pos - lp);
                let wl = T::from_usize_lossy(i + 1) / n_t;
                let wr = T::from_usize_lossy(n - i - 1) / n_t;
                let decrease = parent - wl * gini::<T>(ln, lp) - wr * gini::<T>(rn, rp);
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(Candidate { feature: f, threshold: midpoint(v, next), decrease });
                }
            }
        }
        best
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let m = lo + (hi - lo) * T::half();
    if m < hi && m >= lo {
        m
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini::<f64>(5, 5), 0.5);
        assert_eq!(gini::<f64>(4, 0), 0.0);
        assert!((gini::<f64>(1, 3) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }

    #[test]
    fn tree_without_bootstrap_is_pure() {
        let x = Matrix::from_vec(6, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let y = [false, true, false, true, true, false];
        let p = ForestParams { bootstrap: false, ..Default::default() };
        let t = grow(&x, &y, (0..6).collect(), &p, 1, 0, 0, &[0]);
        for (r, &label) in y.iter().enumerate() {
            let [neg, pos] = t.leaf_for(x.row(r));
            assert_eq!((neg == 0, pos == 0), (label, !label));
        }
        // every split partitions by value <= threshold
        assert_eq!(t.n_leaves(), t.nodes.len() - t.n_leaves() + 1);
        assert!(t.depth() >= 2);
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x = Matrix::from_vec(8, 1, (0..8).map(f64::from).collect()).unwrap();
        let y = [false, true, false, true, false, true, false, true];
        let p = ForestParams { bootstrap: false, max_depth: Some(1), ..Default::default() };
        let t = grow(&x, &y, (0..8).collect(), &p, 1, 0, 0, &[0]);
        assert!(t.depth() <= 1);
        let p = ForestParams { bootstrap: false, min_samples_leaf: 3, ..Default::default() };
        let t = grow(&x, &y, (0..8).collect(), &p, 1, 0, 0, &[0]);
        for n in &t.nodes {
            if let Node::Leaf { counts } = n {
                assert!(counts[0] + counts[1] >= 3);
            }
        }
    }
}
