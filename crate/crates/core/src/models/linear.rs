//! Ordinary least squares on z-scored features.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_width, LabelTransform, ModelError, Standardizer};
use crate::dataset::FrameType;
use crate::linalg::{cholesky_solve, Matrix};

/// Ridge term added when the normal equations are rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearModel {
    /// Weights on standardized columns.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    #[cfg_attr(feature = "serde", serde(default))]
    pub label: LabelTransform,
    #[cfg_attr(feature = "serde", serde(default))]
    pub frame_type: Option<FrameType>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ModelError> {
        check_width(self.weights.len(), row.len())?;
        let mut v = self.intercept;
        for j in 0..row.len() {
            v += self.weights[j] * (row[j] - self.standardizer.mean[j]) / self.standardizer.scale[j];
        }
        Ok(self.label.inverse(v))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_width(self.weights.len(), x.cols())?;
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Weights and intercept on the original (unscaled) columns.
    pub fn coefficients(&self) -> (Vec<f64>, f64) {
        let s = &self.standardizer;
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(&s.scale)
            .map(|(w, sc)| w / sc)
            .collect();
        let shift: f64 = raw.iter().zip(&s.mean).map(|(w, m)| w * m).sum();
        (raw, self.intercept - shift)
    }
}

/// Least-squares fit; see [`fit_linear_with`] for the label transform.
pub fn fit_linear(
    x: &Matrix,
    y: &[f64],
    feature_names: Vec<String>,
) -> Result<LinearModel, ModelError> {
    fit_linear_with(x, y, feature_names, LabelTransform::Identity)
}

pub fn fit_linear_with(
    x: &Matrix,
    y: &[f64],
    feature_names: Vec<String>,
    label: LabelTransform,
) -> Result<LinearModel, ModelError> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(ModelError::LabelMismatch {
            labels: y.len(),
            rows: n,
        });
    }
    check_width(p, feature_names.len())?;
    if n < p + 1 {
        return Err(ModelError::InsufficientRows { have: n, need: p + 1 });
    }
    if p > 0 && x.iter_rows().all(|r| r == x.row(0)) {
        return Err(ModelError::DegenerateInput("all rows identical"));
    }
    let t = label.forward(y)?;
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let y_mean = t.iter().sum::<f64>() / n as f64;

    // Centered columns decouple the intercept: (ZᵀZ) w = Zᵀ(y − ȳ).
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for (row, &yi) in z.iter_rows().zip(&t) {
        let yc = yi - y_mean;
        for a in 0..p {
            rhs[a] += row[a] * yc;
            for b in 0..=a {
                gram[a * p + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }
    let weights = match cholesky_solve(&gram, &rhs, p) {
        Some(w) => w,
        None => {
            log::debug!("normal equations rank deficient; adding ridge {RIDGE_FALLBACK}");
            let mut ridged = gram.clone();
            for a in 0..p {
                ridged[a * p + a] += RIDGE_FALLBACK;
            }
            cholesky_solve(&ridged, &rhs, p)
                .ok_or(ModelError::DegenerateInput("normal equations singular"))?
        }
    };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelError::DegenerateInput("non-finite weights"));
    }
    Ok(LinearModel {
        weights,
        intercept: y_mean,
        feature_names,
        standardizer,
        label,
        frame_type: None,
    })
}
