//! Depth-limited CART regression trees and a bootstrap-aggregated ensemble.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IpdError, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A regression tree over a fixed feature vector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Fits a tree by greedy squared-error splits on the rows in `sample`
    /// (indices into `x`/`y`, repeats allowed).
    pub fn fit(x: &[Vec<f64>], y: &[f64], sample: &[usize], max_depth: usize) -> RegressionTree {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let mut idx = sample.to_vec();
        tree.grow(x, y, &mut idx, max_depth);
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: &mut [usize], depth_left: usize) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| y[i]).sum();
        let mean = sum / n as f64;
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        if depth_left == 0 || n < 2 {
            return at;
        }
        let Some((feature, threshold)) = best_split(x, y, idx, sum) else {
            return at;
        };
        // Partition in place: left rows first.
        let mut mid = 0;
        for k in 0..n {
            if x[idx[k]][feature] <= threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(x, y, l, depth_left - 1);
        let right = self.grow(x, y, r, depth_left - 1);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Best variance-reducing split, or `None` when no split lowers the squared
/// error (constant outcome or constant features).
#[allow(clippy::needless_range_loop)]
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], total: f64) -> Option<(usize, f64)> {
    let n = idx.len();
    let p = x[idx[0]].len();
    let mut order = idx.to_vec();
    // Maximising sum_L^2 / n_L + sum_R^2 / n_R minimises the split SSE.
    let base = total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..p {
        order.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]];
            let (v, next) = (x[order[k]][f], x[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, 0.5 * (v + next)));
            }
        }
    }
    match best {
        Some((gain, f, t)) if gain > 1e-12 * (1.0 + base.abs()) => Some((f, t)),
        _ => None,
    }
}

/// Average of regression trees, each fit to a bootstrap resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    /// Feature indices (into the full feature vector) the trees see.
    features: Vec<usize>,
    trees: Vec<RegressionTree>,
}

impl BaggedTrees {
    pub fn fit(
        z: &[Vec<f64>],
        y: &[f64],
        features: &[usize],
        n_trees: usize,
        max_depth: usize,
        seed_value: u64,
    ) -> Result<BaggedTrees> {
        if y.is_empty() || z.len() != y.len() {
            return Err(IpdError::InsufficientData { needed: 1, available: y.len().min(z.len()) });
        }
        if n_trees == 0 {
            return Err(IpdError::InvalidConfig("bagged trees need at least one tree".into()));
        }
        if let Some(&bad) = features.iter().find(|&&j| j >= z[0].len()) {
            return Err(IpdError::DimensionMismatch { expected: z[0].len(), found: bad + 1 });
        }
        let x: Vec<Vec<f64>> = z.iter().map(|row| features.iter().map(|&j| row[j]).collect()).collect();
        let n = y.len();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = seed::rng_from_seed(seed::split_stream(seed_value, seed::STREAM_BOOTSTRAP, t as u64));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(&x, y, &sample, max_depth)
            })
            .collect();
        Ok(BaggedTrees { features: features.to_vec(), trees })
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.features.len()];
        for (b, &j) in buf.iter_mut().zip(&self.features) {
            *b = z[j];
        }
        self.trees.iter().map(|t| t.predict(&buf)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
