//! Feature-importance reports for forests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{ForestModel, ModelError};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ImportanceMethod {
    /// Summed variance reduction per feature (normalized per tree, then averaged).
    Impurity,
    /// Validation-MSE increase when a column is shuffled.
    Permutation { repeats: usize, seed: u64 },
}

/// Non-negative per-feature scores summing to 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
}

impl ImportanceReport {
    /// Feature indices ordered by decreasing score (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top(&self) -> Option<&str> {
        self.ranking().first().map(|&i| self.feature_names[i].as_str())
    }
}

/// Scales to unit sum; all-zero input becomes uniform `1/p`.
fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let p = raw.len();
    if total > 0.0 && total.is_finite() {
        raw.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / p as f64; p]
    }
}

fn mse(model: &ForestModel, x: &Matrix, y: &[f64]) -> Result<f64, ModelError> {
    let pred = model.predict(x)?;
    Ok(pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn importance(
    model: &ForestModel,
    x_val: &Matrix,
    y_val: &[f64],
    method: ImportanceMethod,
) -> Result<ImportanceReport, ModelError> {
    let p = model.feature_names.len();
    let scores = match method {
        ImportanceMethod::Impurity => {
            let mut acc = vec![0.0; p];
            let mut contributing = 0usize;
            for tree in &model.trees {
                let mut per = vec![0.0; p];
                for node in 0..tree.node_count() {
                    if !tree.is_leaf(node) {
                        per[tree.feature[node] as usize] += tree.impurity_decrease[node];
                    }
                }
                let total: f64 = per.iter().sum();
                if total > 0.0 {
                    contributing += 1;
                    for (a, v) in acc.iter_mut().zip(per) {
                        *a += v / total;
                    }
                }
            }
            if contributing == 0 {
                log::debug!("no splits in any tree; impurity importance is uniform");
            }
            normalize(acc)
        }
        ImportanceMethod::Permutation { repeats, seed } => {
            if x_val.rows() == 0 || y_val.is_empty() {
                return Err(ModelError::EmptyValidation);
            }
            if y_val.len() != x_val.rows() {
                return Err(ModelError::LabelMismatch {
                    labels: y_val.len(),
                    rows: x_val.rows(),
                });
            }
            super::check_width(p, x_val.cols())?;
            let base = mse(model, x_val, y_val)?;
            let repeats = repeats.max(1);
            let mut raw = vec![0.0; p];
            for (j, slot) in raw.iter_mut().enumerate() {
                let mut total = 0.0;
                for rep in 0..repeats {
                    let mut column = x_val.column(j);
                    column.shuffle(&mut rng::stream(seed, &[j as u64, rep as u64]));
                    let mut shuffled = x_val.clone();
                    for (i, v) in column.into_iter().enumerate() {
                        shuffled.set(i, j, v);
                    }
                    total += mse(model, &shuffled, y_val)? - base;
                }
                *slot = (total / repeats as f64).max(0.0);
            }
            normalize(raw)
        }
    };
    Ok(ImportanceReport {
        method,
        feature_names: model.feature_names.clone(),
        scores,
    })
}
