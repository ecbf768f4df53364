//! Frame-level bit predictors: least-squares linear regression and a CART
//! random forest, plus feature-importance reports.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::FrameType;
use crate::linalg::Matrix;

pub mod forest;
pub mod importance;
pub mod linear;
pub mod tree;

pub use forest::{fit_forest, ForestModel, ForestParams, ForestTrainer, MaxFeatures};
pub use importance::{importance, ImportanceMethod, ImportanceReport};
pub use linear::{fit_linear, fit_linear_with, LinearModel};
pub use tree::{RegressionTree, TreeLimits};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("degenerate training input: {0}")]
    DegenerateInput(&'static str),
    #[error("need at least {need} rows, got {have}")]
    InsufficientRows { have: usize, need: usize },
    #[error("model expects {expected} features, input has {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("feature {index} is {got:?}, model expects {expected:?}")]
    FeatureNameMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("labels and rows differ in length ({labels} vs {rows})")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("permutation importance needs non-empty validation data")]
    EmptyValidation,
    #[error("log-label training needs strictly positive labels")]
    NonPositiveLabel,
}

/// Optional transform applied to labels before fitting and undone on output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LabelTransform {
    #[default]
    Identity,
    Log,
}

impl LabelTransform {
    pub fn forward(self, y: &[f64]) -> Result<Vec<f64>, ModelError> {
        match self {
            LabelTransform::Identity => Ok(y.to_vec()),
            LabelTransform::Log => y
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        Ok(libm::log(v))
                    } else {
                        Err(ModelError::NonPositiveLabel)
                    }
                })
                .collect(),
        }
    }

    #[inline]
    pub fn inverse(self, v: f64) -> f64 {
        match self {
            LabelTransform::Identity => v,
            LabelTransform::Log => libm::exp(v),
        }
    }
}

/// Per-column z-score statistics from the training rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let p = x.cols();
        let mut mean = alloc::vec![0.0; p];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; p];
        for row in x.iter_rows() {
            for j in 0..p {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = libm::sqrt(v / n);
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; p],
            scale: alloc::vec![1.0; p],
        }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.scale[j];
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_row(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// A trained model for one frame type.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum BitPredictor {
    Linear(LinearModel),
    Forest(ForestModel),
}

impl BitPredictor {
    pub fn feature_names(&self) -> &[String] {
        match self {
            BitPredictor::Linear(m) => &m.feature_names,
            BitPredictor::Forest(m) => &m.feature_names,
        }
    }

    pub fn frame_type(&self) -> Option<FrameType> {
        match self {
            BitPredictor::Linear(m) => m.frame_type,
            BitPredictor::Forest(m) => m.frame_type,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BitPredictor::Linear(_) => "linear",
            BitPredictor::Forest(_) => "forest",
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        match self {
            BitPredictor::Linear(m) => m.predict(x),
            BitPredictor::Forest(m) => m.predict(x),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ModelError> {
        match self {
            BitPredictor::Linear(m) => m.predict_row(row),
            BitPredictor::Forest(m) => m.predict_row(row),
        }
    }

    /// Checks that `names` equals the model's training columns.
    pub fn check_names<S: AsRef<str>>(&self, names: &[S]) -> Result<(), ModelError> {
        check_names(self.feature_names(), names)
    }
}

pub(crate) fn check_names<S: AsRef<str>>(expected: &[String], got: &[S]) -> Result<(), ModelError> {
    if expected.len() != got.len() {
        return Err(ModelError::FeatureMismatch {
            expected: expected.len(),
            got: got.len(),
        });
    }
    for (index, (e, g)) in expected.iter().zip(got).enumerate() {
        if e != g.as_ref() {
            return Err(ModelError::FeatureNameMismatch {
                index,
                expected: e.clone(),
                got: String::from(g.as_ref()),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_width(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        Err(ModelError::FeatureMismatch { expected, got })
    } else {
        Ok(())
    }
}
