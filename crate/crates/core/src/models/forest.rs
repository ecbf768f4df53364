//! Bagged CART random forest for regression.
//!
//! Each tree owns an independent random stream derived from `(seed, tree
//! index)`, so trees can be trained in any order or in parallel and the
//! forest comes out identical.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::tree::{RegressionTree, TreeLimits};
use super::{check_width, LabelTransform, ModelError, Standardizer};
use crate::dataset::FrameType;
use crate::linalg::Matrix;
use crate::rng;

/// Features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MaxFeatures {
    #[default]
    All,
    /// `ceil(p / 3)`.
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::All => p,
            MaxFeatures::Third => p.div_ceil(3),
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub label: LabelTransform,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 16,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            bootstrap: true,
            label: LabelTransform::Identity,
        }
    }
}

impl ForestParams {
    pub fn limits(&self, p: usize) -> TreeLimits {
        TreeLimits {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split.max(2),
            min_samples_leaf: self.min_samples_leaf.max(1),
            max_features: self.max_features.resolve(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestModel {
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub params: ForestParams,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub frame_type: Option<FrameType>,
    pub trees: Vec<RegressionTree>,
}

impl ForestModel {
    /// Mean of the per-tree outputs for one raw (unscaled) row.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ModelError> {
        check_width(self.feature_names.len(), row.len())?;
        let mut z = alloc::vec![0.0; row.len()];
        self.standardizer.transform_row(row, &mut z);
        Ok(self.params.label.inverse(self.raw_mean(&z)))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_width(self.feature_names.len(), x.cols())?;
        let mut z = alloc::vec![0.0; x.cols()];
        Ok(x.iter_rows()
            .map(|row| {
                self.standardizer.transform_row(row, &mut z);
                self.params.label.inverse(self.raw_mean(&z))
            })
            .collect())
    }

    /// Per-tree outputs (label space) for one raw row.
    pub fn tree_predictions(&self, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_width(self.feature_names.len(), row.len())?;
        let mut z = alloc::vec![0.0; row.len()];
        self.standardizer.transform_row(row, &mut z);
        Ok(self
            .trees
            .iter()
            .map(|t| self.params.label.inverse(t.predict_row(&z)))
            .collect())
    }

    fn raw_mean(&self, z: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(z)).sum::<f64>() / self.trees.len() as f64
    }

    /// Runs the structural validator over every tree.
    pub fn validate(&self) -> Result<(), (usize, &'static str)> {
        let p = self.feature_names.len();
        if self.trees.is_empty() {
            return Err((0, "forest has no trees"));
        }
        if self.standardizer.mean.len() != p || self.standardizer.scale.len() != p {
            return Err((0, "normalization statistics do not match the feature count"));
        }
        let limits = self.params.limits(p);
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(&limits).map_err(|e| (i, e))?;
            if t.feature.iter().any(|&f| f != super::tree::LEAF && f as usize >= p) {
                return Err((i, "split on a feature index beyond the model width"));
            }
        }
        Ok(())
    }
}

/// Standardized training data shared by all trees of one forest.
///
/// [`ForestTrainer::fit_tree`] is pure in `(data, params, seed, index)`, which
/// lets callers distribute trees over threads.
#[derive(Debug, Clone)]
pub struct ForestTrainer {
    z: Matrix,
    labels: Vec<f64>,
    standardizer: Standardizer,
    feature_names: Vec<String>,
    params: ForestParams,
    seed: u64,
}

impl ForestTrainer {
    pub fn new(
        x: &Matrix,
        y: &[f64],
        feature_names: Vec<String>,
        params: ForestParams,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if x.rows() == 0 {
            return Err(ModelError::InsufficientRows { have: 0, need: 1 });
        }
        if y.len() != x.rows() {
            return Err(ModelError::LabelMismatch {
                labels: y.len(),
                rows: x.rows(),
            });
        }
        check_width(x.cols(), feature_names.len())?;
        if params.n_estimators == 0 {
            return Err(ModelError::DegenerateInput("n_estimators must be positive"));
        }
        let labels = params.label.forward(y)?;
        let standardizer = Standardizer::fit(x);
        Ok(Self {
            z: standardizer.transform(x),
            labels,
            standardizer,
            feature_names,
            params,
            seed,
        })
    }

    pub fn n_estimators(&self) -> usize {
        self.params.n_estimators
    }

    pub fn fit_tree(&self, tree_index: usize) -> RegressionTree {
        let n = self.z.rows();
        let mut r = rng::stream(self.seed, &[tree_index as u64]);
        let samples: Vec<u32> = if self.params.bootstrap {
            (0..n).map(|_| r.random_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let limits = self.params.limits(self.z.cols());
        RegressionTree::fit(&self.z, &self.labels, samples, &limits, &mut r)
    }

    pub fn finish(self, trees: Vec<RegressionTree>) -> ForestModel {
        assert_eq!(trees.len(), self.params.n_estimators, "tree count mismatch");
        ForestModel {
            feature_names: self.feature_names,
            standardizer: self.standardizer,
            params: self.params,
            seed: self.seed,
            frame_type: None,
            trees,
        }
    }
}

/// Serial forest training.
pub fn fit_forest(
    x: &Matrix,
    y: &[f64],
    feature_names: Vec<String>,
    params: ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    let trainer = ForestTrainer::new(x, y, feature_names, params, seed)?;
    let trees = (0..trainer.n_estimators()).map(|i| trainer.fit_tree(i)).collect();
    Ok(trainer.finish(trees))
}
