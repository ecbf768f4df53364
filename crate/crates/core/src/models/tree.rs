//! CART regression tree with variance-reduction splits.
//!
//! Nodes are stored as flat parallel arrays. Split candidates are midpoints
//! between consecutive distinct feature values; samples with
//! `x[feature] <= threshold` go left. Ties in impurity decrease keep the
//! lowest feature index, then the lowest threshold.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;

/// Marker in [`RegressionTree::feature`] for leaves.
pub const LEAF: u32 = u32::MAX;

/// Growth limits for one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLimits {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per node; `>= p` means all of them.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionTree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Mean training label of the node.
    pub value: Vec<f64>,
    /// Training samples (bootstrap draws, with repeats) that reached the node.
    pub n_samples: Vec<u32>,
    /// Drop in summed squared error achieved by the node's split; 0 at leaves.
    pub impurity_decrease: Vec<f64>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl RegressionTree {
    pub fn node_count(&self) -> usize {
        self.value.len()
    }

    #[inline]
    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] == LEAF
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        while !self.is_leaf(node) {
            node = if row[self.feature[node] as usize] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        self.value[node]
    }

    /// Depth of the deepest leaf (root has depth 0).
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, d)) = stack.pop() {
            if self.is_leaf(node) {
                max = max.max(d);
            } else {
                stack.push((self.left[node] as usize, d + 1));
                stack.push((self.right[node] as usize, d + 1));
            }
        }
        max
    }

    fn push_node(&mut self, value: f64, n: usize) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.n_samples.push(n as u32);
        self.impurity_decrease.push(0.0);
        self.value.len() - 1
    }

    /// Grows a tree on `samples` (row indices into `x`, repeats allowed).
    pub fn fit<R: Rng>(
        x: &Matrix,
        y: &[f64],
        samples: Vec<u32>,
        limits: &TreeLimits,
        rng: &mut R,
    ) -> RegressionTree {
        let p = x.cols();
        let mut tree = RegressionTree::default();
        let mut feature_pool: Vec<usize> = (0..p).collect();
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        let root = tree.push_node(mean_of(y, &samples), samples.len());
        let mut stack = vec![(root, samples, 0usize)];

        while let Some((node, idx, depth)) = stack.pop() {
            let n = idx.len();
            if depth >= limits.max_depth
                || n < limits.min_samples_split
                || n < 2 * limits.min_samples_leaf
                || is_constant(y, &idx)
            {
                continue;
            }

            let candidates: &[usize] = if limits.max_features >= p {
                &feature_pool
            } else {
                // partial Fisher-Yates, then index order for deterministic ties
                for i in 0..limits.max_features {
                    let j = rng.random_range(i..p);
                    feature_pool.swap(i, j);
                }
                feature_pool[..limits.max_features].sort_unstable();
                &feature_pool[..limits.max_features]
            };

            let total: f64 = idx.iter().map(|&i| y[i as usize]).sum();
            let parent_term = total * total / n as f64;
            let mut best: Option<Best> = None;
            for &f in candidates {
                pairs.clear();
                pairs.extend(idx.iter().map(|&i| (x.get(i as usize, f), y[i as usize])));
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                if pairs[0].0 == pairs[n - 1].0 {
                    continue;
                }
                let mut left_sum = 0.0;
                for split in 1..n {
                    left_sum += pairs[split - 1].1;
                    if pairs[split - 1].0 == pairs[split].0 {
                        continue;
                    }
                    let (nl, nr) = (split, n - split);
                    if nl < limits.min_samples_leaf || nr < limits.min_samples_leaf {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64
                        - parent_term;
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        let (lo, hi) = (pairs[split - 1].0, pairs[split].0);
                        let mut threshold = lo + (hi - lo) / 2.0;
                        if threshold >= hi {
                            threshold = lo;
                        }
                        best = Some(Best {
                            feature: f,
                            threshold,
                            gain,
                        });
                    }
                }
            }

            let Some(best) = best.filter(|b| b.gain > 0.0) else {
                continue;
            };
            let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = idx
                .iter()
                .partition(|&&i| x.get(i as usize, best.feature) <= best.threshold);
            let l = tree.push_node(mean_of(y, &left_idx), left_idx.len());
            let r = tree.push_node(mean_of(y, &right_idx), right_idx.len());
            tree.feature[node] = best.feature as u32;
            tree.threshold[node] = best.threshold;
            tree.left[node] = l as u32;
            tree.right[node] = r as u32;
            tree.impurity_decrease[node] = best.gain;
            stack.push((r, right_idx, depth + 1));
            stack.push((l, left_idx, depth + 1));
        }
        tree
    }

    /// Checks depth, leaf-size and split-size limits and the child links.
    pub fn validate(&self, limits: &TreeLimits) -> Result<(), &'static str> {
        if self.node_count() == 0 {
            return Err("empty tree");
        }
        let len = self.node_count();
        if [
            self.feature.len(),
            self.threshold.len(),
            self.left.len(),
            self.right.len(),
            self.n_samples.len(),
            self.impurity_decrease.len(),
        ]
        .iter()
        .any(|&l| l != len)
        {
            return Err("node arrays differ in length");
        }
        let mut visited = vec![false; len];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            if node >= len || visited[node] {
                return Err("child link out of range or shared");
            }
            visited[node] = true;
            if depth > limits.max_depth {
                return Err("tree deeper than max_depth");
            }
            if self.is_leaf(node) {
                if (self.n_samples[node] as usize) < limits.min_samples_leaf {
                    return Err("leaf below min_samples_leaf");
                }
            } else {
                if (self.n_samples[node] as usize) < limits.min_samples_split {
                    return Err("split on node below min_samples_split");
                }
                let (l, r) = (self.left[node] as usize, self.right[node] as usize);
                if l >= len || r >= len {
                    return Err("child link out of range");
                }
                if self.n_samples[l] + self.n_samples[r] != self.n_samples[node] {
                    return Err("children do not partition the node's samples");
                }
                stack.push((l, depth + 1));
                stack.push((r, depth + 1));
            }
        }
        if visited.iter().any(|v| !v) {
            return Err("unreachable nodes");
        }
        Ok(())
    }
}

fn mean_of(y: &[f64], idx: &[u32]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&i| y[i as usize]).sum::<f64>() / idx.len() as f64
}

fn is_constant(y: &[f64], idx: &[u32]) -> bool {
    let first = y[idx[0] as usize];
    idx.iter().all(|&i| y[i as usize] == first)
}
