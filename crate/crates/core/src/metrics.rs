//! Prediction-accuracy and coding-efficiency metrics.

use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::gauss_solve;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("ground truth contains zero at position {0}")]
    ZeroTruth(usize),
    #[error("ground truth has zero variance")]
    ZeroVariance,
    #[error("target must be positive")]
    ZeroTarget,
    #[error("degenerate rate-quality curve: {0}")]
    DegenerateCurve(&'static str),
    #[error("rate-quality curves do not overlap in quality")]
    NoOverlap,
}

fn check_pair(a: &[f64], b: &[f64], min: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min {
        return Err(MetricsError::TooFewSamples {
            have: a.len(),
            need: min,
        });
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y_true, y_pred, 1)?;
    let mut acc = 0.0;
    for (i, (t, p)) in y_true.iter().zip(y_pred).enumerate() {
        if *t == 0.0 {
            return Err(MetricsError::ZeroTruth(i));
        }
        acc += ((t - p) / t).abs();
    }
    Ok(100.0 * acc / y_true.len() as f64)
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y_true, y_pred, 2)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Absolute deviation from the target, in percent of the target.
pub fn rate_deviation(achieved_total: f64, target_total: f64) -> Result<f64, MetricsError> {
    if !(target_total > 0.0) {
        return Err(MetricsError::ZeroTarget);
    }
    Ok(100.0 * (achieved_total - target_total).abs() / target_total)
}

/// `(6·Y + U + V) / 8` weighting of per-plane PSNR.
pub fn combined_yuv_psnr(y: f64, u: f64, v: f64) -> f64 {
    (6.0 * y + u + v) / 8.0
}

/// One point of a rate-quality curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Self {
        Self { rate, quality }
    }
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl Pchip {
    /// `x` strictly increasing, at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, MetricsError> {
        let n = x.len();
        if n != y.len() {
            return Err(MetricsError::LengthMismatch(n, y.len()));
        }
        if n < 2 {
            return Err(MetricsError::TooFewSamples { have: n, need: 2 });
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MetricsError::DegenerateCurve("abscissae not strictly increasing"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slopes = alloc::vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                let (a, b) = (delta[i - 1], delta[i]);
                if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                    slopes[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slopes[i] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            slopes[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Evaluates the interpolant; outside the knots the end cubics extend.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// Exact integral over `[a, b]` with `x[0] <= a <= b <= x[n-1]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.x.len() - 1 {
            let (x0, x1) = (self.x[i], self.x[i + 1]);
            let lo = a.max(x0);
            let hi = b.min(x1);
            if hi <= lo {
                continue;
            }
            total += self.segment_integral(i, lo, hi);
        }
        total
    }

    /// Integral of segment `i` between `lo` and `hi`, via the antiderivative
    /// of the Hermite basis in the local coordinate.
    fn segment_integral(&self, i: usize, lo: f64, hi: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let prim = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            let s4 = s3 * s;
            let p00 = s - s3 + s4 / 2.0;
            let p10 = s2 / 2.0 - 2.0 * s3 / 3.0 + s4 / 4.0;
            let p01 = s3 - s4 / 2.0;
            let p11 = s4 / 4.0 - s3 / 3.0;
            h * (p00 * self.y[i]
                + p10 * h * self.slopes[i]
                + p01 * self.y[i + 1]
                + p11 * h * self.slopes[i + 1])
        };
        prim((hi - self.x[i]) / h) - prim((lo - self.x[i]) / h)
    }
}

/// Curve model for the BD integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BdInterpolation {
    #[default]
    Pchip,
    /// Least-squares cubic polynomial over all points.
    Cubic,
}

/// Sorted (quality, log10 rate) knots after validating the curve.
fn curve_knots(points: &[RdPoint]) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if points.len() < 4 {
        return Err(MetricsError::DegenerateCurve("fewer than four points"));
    }
    if points.iter().any(|p| !(p.rate > 0.0) || !p.quality.is_finite()) {
        return Err(MetricsError::DegenerateCurve("rates must be positive and qualities finite"));
    }
    let mut pts: Vec<RdPoint> = points.to_vec();
    pts.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    for w in pts.windows(2) {
        if !(w[1].rate > w[0].rate) {
            return Err(MetricsError::DegenerateCurve("rates not strictly increasing"));
        }
        if w[1].quality < w[0].quality {
            return Err(MetricsError::DegenerateCurve("quality decreases with rate"));
        }
        if w[1].quality == w[0].quality {
            return Err(MetricsError::DegenerateCurve("repeated quality value"));
        }
    }
    let q = pts.iter().map(|p| p.quality).collect();
    let r = pts.iter().map(|p| libm::log10(p.rate)).collect();
    Ok((q, r))
}

/// Cubic `c0 + c1·u + c2·u² + c3·u³` in `u = (q − center) / spread`.
struct CubicFit {
    coeffs: [f64; 4],
    center: f64,
    spread: f64,
}

impl CubicFit {
    fn fit(q: &[f64], r: &[f64]) -> Result<Self, MetricsError> {
        let center = q.iter().sum::<f64>() / q.len() as f64;
        let spread = q.iter().map(|v| (v - center).abs()).fold(0.0, f64::max).max(1e-12);
        let mut ata = [0.0; 16];
        let mut atb = [0.0; 4];
        for (&qi, &ri) in q.iter().zip(r) {
            let u = (qi - center) / spread;
            let pw = [1.0, u, u * u, u * u * u];
            for a in 0..4 {
                atb[a] += pw[a] * ri;
                for b in 0..4 {
                    ata[a * 4 + b] += pw[a] * pw[b];
                }
            }
        }
        let c = gauss_solve(&ata, &atb, 4)
            .ok_or(MetricsError::DegenerateCurve("cubic fit is singular"))?;
        Ok(Self {
            coeffs: [c[0], c[1], c[2], c[3]],
            center,
            spread,
        })
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let prim = |q: f64| {
            let u = (q - self.center) / self.spread;
            let c = &self.coeffs;
            self.spread * (c[0] * u + c[1] * u * u / 2.0 + c[2] * u * u * u / 3.0 + c[3] * u * u * u * u / 4.0)
        };
        prim(b) - prim(a)
    }
}

/// Bjøntegaard delta rate of `test` against `anchor`, in percent, using
/// monotone cubic Hermite interpolation.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64, MetricsError> {
    bd_rate_with(anchor, test, BdInterpolation::Pchip)
}

pub fn bd_rate_with(
    anchor: &[RdPoint],
    test: &[RdPoint],
    interpolation: BdInterpolation,
) -> Result<f64, MetricsError> {
    let (qa, ra) = curve_knots(anchor)?;
    let (qt, rt) = curve_knots(test)?;
    let lo = qa[0].max(qt[0]);
    let hi = qa[qa.len() - 1].min(qt[qt.len() - 1]);
    if !(hi > lo) {
        return Err(MetricsError::NoOverlap);
    }
    let (ia, it) = match interpolation {
        BdInterpolation::Pchip => (
            Pchip::new(qa, ra)?.integral(lo, hi),
            Pchip::new(qt, rt)?.integral(lo, hi),
        ),
        BdInterpolation::Cubic => (
            CubicFit::fit(&qa, &ra)?.integral(lo, hi),
            CubicFit::fit(&qt, &rt)?.integral(lo, hi),
        ),
    };
    let avg = (it - ia) / (hi - lo);
    Ok((libm::pow(10.0, avg) - 1.0) * 100.0)
}
