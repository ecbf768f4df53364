//! Second-pass QP refinement and a simulated rate-control loop.
//!
//! The first pass supplies a QP `q` and a predicted size `b̂` per frame. Each
//! GOP receives a bit budget that is split in proportion to `b̂`, and every
//! frame's QP is moved toward its share `b′` by
//! `q̄ = q − c_low·√max(1, q)·log2(b′/b̂)`, followed by a low-QP correction
//! `q′ = round(q̄ + c_high·max(0, q_start − q̄))`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::{
    feature_names, feature_vector, DatasetError, FrameCodingRecord, FrameType, OracleDrivers,
    SequenceFeatures, SyntheticOracleParams,
};
use crate::gop::{cascade_qps, decode_order, DEFAULT_LEVEL_OFFSETS, MAX_QP};
use crate::models::{BitPredictor, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RcError {
    #[error("bit counts must be positive (b_hat = {b_hat}, b_prime = {b_prime})")]
    NonPositiveBits { b_hat: f64, b_prime: f64 },
    #[error("cannot allocate bits to an empty GOP")]
    EmptyGop,
    #[error("prediction {index} is not positive ({value})")]
    NonPositivePrediction { index: usize, value: f64 },
    #[error("GOP target must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("invalid rate-control constants: {0}")]
    InvalidConstants(String),
    #[error("no model for {0}-frames")]
    MissingPredictor(FrameType),
    #[error("replay log has fewer than two QPs for frame {frame} (asked for q = {q})")]
    ReplayMiss { frame: usize, q: i32 },
    #[error("backend disagrees with GOP roles: {0}")]
    BackendMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Tuning constants of the QP update.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RcConstants {
    pub c_low: f64,
    pub c_high: f64,
    pub q_start: i32,
}

pub const DEFAULT_C_LOW: f64 = 1.0;
pub const DEFAULT_Q_START: i32 = 24;

impl Default for RcConstants {
    fn default() -> Self {
        Self {
            c_low: DEFAULT_C_LOW,
            c_high: 0.5,
            q_start: DEFAULT_Q_START,
        }
    }
}

impl RcConstants {
    /// Defaults with `c_high` picked from the picture height.
    pub fn for_height(height: usize) -> Self {
        Self {
            c_high: c_high_for_height(height),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RcError> {
        if !(self.c_low > 0.0 && self.c_low.is_finite()) {
            return Err(RcError::InvalidConstants(format!(
                "c_low must be positive, got {}",
                self.c_low
            )));
        }
        if !(self.c_high > 0.0 && self.c_high < 1.0) {
            return Err(RcError::InvalidConstants(format!(
                "c_high must lie in (0, 1), got {}",
                self.c_high
            )));
        }
        if !(0..=MAX_QP).contains(&self.q_start) {
            return Err(RcError::InvalidConstants(format!(
                "q_start must lie in [0, {MAX_QP}], got {}",
                self.q_start
            )));
        }
        Ok(())
    }
}

/// 0.25 at 480 lines or fewer, 0.5 at 2160 or more, linear in log2(height)
/// in between.
pub fn c_high_for_height(height: usize) -> f64 {
    const LO: (f64, f64) = (480.0, 0.25);
    const HI: (f64, f64) = (2160.0, 0.5);
    let h = height as f64;
    if h <= LO.0 {
        return LO.1;
    }
    if h >= HI.0 {
        return HI.1;
    }
    let t = (libm::log2(h) - libm::log2(LO.0)) / (libm::log2(HI.0) - libm::log2(LO.0));
    LO.1 + t * (HI.1 - LO.1)
}

/// Output of [`qp_refine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpRefinement {
    pub q_bar: f64,
    pub q_prime: i32,
    /// The rounded value fell outside `[0, MAX_QP]`.
    pub clamped: bool,
}

/// Rounds half away from zero.
pub fn round_half_away(v: f64) -> f64 {
    libm::round(v)
}

pub fn qp_refine(q: f64, b_hat: f64, b_prime: f64, k: &RcConstants) -> Result<QpRefinement, RcError> {
    if !(b_hat > 0.0 && b_prime > 0.0) {
        return Err(RcError::NonPositiveBits { b_hat, b_prime });
    }
    let q_bar = q - k.c_low * libm::sqrt(q.max(1.0)) * libm::log2(b_prime / b_hat);
    let corrected = q_bar + k.c_high * (f64::from(k.q_start) - q_bar).max(0.0);
    let rounded = round_half_away(corrected);
    let q_prime = rounded.clamp(0.0, f64::from(MAX_QP));
    let clamped = q_prime != rounded;
    if clamped {
        log::debug!("q' {rounded} clamped to {q_prime}");
    }
    Ok(QpRefinement {
        q_bar,
        q_prime: q_prime as i32,
        clamped,
    })
}

/// Splits `target` across frames in proportion to `predictions`. The last
/// frame absorbs the rounding residue so the shares sum to `target`.
pub fn allocate_gop(target: f64, predictions: &[f64]) -> Result<Vec<f64>, RcError> {
    if predictions.is_empty() {
        return Err(RcError::EmptyGop);
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(RcError::NonPositiveTarget(target));
    }
    for (index, &value) in predictions.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(RcError::NonPositivePrediction { index, value });
        }
    }
    let total: f64 = predictions.iter().sum();
    let n = predictions.len();
    let mut out: Vec<f64> = predictions.iter().map(|b| target * b / total).collect();
    let head: f64 = out[..n - 1].iter().sum();
    out[n - 1] = target - head;
    Ok(out)
}

/// Result of [`compensate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compensation {
    pub target: f64,
    /// Deficit that the floor kept from being applied.
    pub carried: f64,
}

/// Minimum adjusted target as a fraction of the nominal one.
pub const COMPENSATION_FLOOR: f64 = 0.1;

/// `next_target − strength·deficit`, floored at 10% of `next_target`.
pub fn compensate(deficit: f64, next_target: f64, strength: f64) -> Compensation {
    let wanted = next_target - strength * deficit;
    let floor = COMPENSATION_FLOOR * next_target;
    if wanted >= floor {
        Compensation {
            target: wanted,
            carried: 0.0,
        }
    } else {
        Compensation {
            target: floor,
            carried: (floor - wanted) / strength,
        }
    }
}

/// Achieved size reported by a backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendBits {
    pub bits: f64,
    /// The value was interpolated rather than looked up.
    pub interpolated: bool,
}

/// Something that "encodes" a frame at a QP and reports its size.
pub trait RcBackend {
    fn encode(&mut self, frame_index: usize, frame_type: FrameType, q: i32) -> Result<BackendBits, RcError>;
}

/// Synthetic oracle evaluated on a sequence's features.
pub struct OracleBackend<'a> {
    seq: &'a SequenceFeatures,
    params: SyntheticOracleParams,
}

impl<'a> OracleBackend<'a> {
    pub fn new(seq: &'a SequenceFeatures, params: SyntheticOracleParams) -> Result<Self, RcError> {
        params.validate()?;
        Ok(Self { seq, params })
    }
}

impl RcBackend for OracleBackend<'_> {
    fn encode(&mut self, frame_index: usize, frame_type: FrameType, q: i32) -> Result<BackendBits, RcError> {
        let h = self.seq.reference_gradients(frame_index)?;
        let drivers = OracleDrivers::new(&self.seq.records[frame_index], &h);
        Ok(BackendBits {
            bits: self.params.bits(&self.seq.id, frame_index, frame_type, drivers, q),
            interpolated: false,
        })
    }
}

/// Looks sizes up in an encoder log, interpolating `ln(bits)` linearly in
/// QP between the two nearest logged QPs when the exact QP is absent.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    frames: BTreeMap<usize, (FrameType, BTreeMap<i32, f64>)>,
}

impl ReplayBackend {
    /// Builds the table from the records of one sequence.
    pub fn from_records<'r>(records: impl IntoIterator<Item = &'r FrameCodingRecord>) -> Result<Self, RcError> {
        let mut frames: BTreeMap<usize, (FrameType, BTreeMap<i32, f64>)> = BTreeMap::new();
        for r in records {
            r.validate()?;
            let entry = frames
                .entry(r.frame_index)
                .or_insert_with(|| (r.frame_type, BTreeMap::new()));
            if entry.0 != r.frame_type {
                return Err(RcError::BackendMismatch(format!(
                    "frame {} logged as both {} and {}",
                    r.frame_index, entry.0, r.frame_type
                )));
            }
            entry.1.insert(r.q, r.bits);
        }
        Ok(Self { frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

impl RcBackend for ReplayBackend {
    fn encode(&mut self, frame_index: usize, frame_type: FrameType, q: i32) -> Result<BackendBits, RcError> {
        let miss = RcError::ReplayMiss { frame: frame_index, q };
        let (logged_type, table) = self.frames.get(&frame_index).ok_or(miss.clone())?;
        if *logged_type != frame_type {
            return Err(RcError::BackendMismatch(format!(
                "frame {frame_index} is {frame_type} in the GOP plan but {logged_type} in the log"
            )));
        }
        if let Some(&bits) = table.get(&q) {
            return Ok(BackendBits {
                bits,
                interpolated: false,
            });
        }
        if table.len() < 2 {
            return Err(miss);
        }
        let mut nearest: Vec<(i32, f64)> = table.iter().map(|(&k, &v)| (k, v)).collect();
        nearest.sort_by_key(|&(k, _)| (k.abs_diff(q), k));
        let (q1, b1) = nearest[0];
        let (q2, b2) = nearest[1];
        let slope = (libm::log(b2) - libm::log(b1)) / f64::from(q2 - q1);
        let bits = libm::exp(libm::log(b1) + slope * f64::from(q - q1));
        log::debug!("replay: frame {frame_index} q {q} interpolated from q {q1}/{q2}");
        Ok(BackendBits {
            bits,
            interpolated: true,
        })
    }
}

/// One model per frame type.
#[derive(Debug, Clone, Default)]
pub struct PredictorSet {
    pub i: Option<BitPredictor>,
    pub p: Option<BitPredictor>,
    pub b: Option<BitPredictor>,
}

impl PredictorSet {
    pub fn get(&self, frame_type: FrameType) -> Option<&BitPredictor> {
        match frame_type {
            FrameType::I => self.i.as_ref(),
            FrameType::P => self.p.as_ref(),
            FrameType::B => self.b.as_ref(),
        }
    }

    pub fn set(&mut self, frame_type: FrameType, model: BitPredictor) {
        match frame_type {
            FrameType::I => self.i = Some(model),
            FrameType::P => self.p = Some(model),
            FrameType::B => self.b = Some(model),
        }
    }

    /// Predicted bits for frame `k` of `seq` with the given per-frame QPs.
    pub fn predict_frame(&self, seq: &SequenceFeatures, k: usize, qps: &[i32]) -> Result<f64, RcError> {
        let role = &seq.roles[k];
        let model = self
            .get(role.frame_type)
            .ok_or(RcError::MissingPredictor(role.frame_type))?;
        let use_chroma = model.feature_names().iter().any(|n| n == "E_U");
        model.check_names(&feature_names(role.frame_type, use_chroma))?;
        let h = seq.reference_gradients(k)?;
        let q_refs: Vec<f64> = role.refs.iter().map(|&r| f64::from(qps[r])).collect();
        let row = feature_vector(
            role.frame_type,
            &seq.records[k],
            &h,
            f64::from(qps[k]),
            &q_refs,
            use_chroma,
        );
        Ok(model.predict_row(&row)?)
    }

    /// Predictions for every frame.
    pub fn predict_sequence(&self, seq: &SequenceFeatures, qps: &[i32]) -> Result<Vec<f64>, RcError> {
        (0..seq.frame_count()).map(|k| self.predict_frame(seq, k, qps)).collect()
    }
}

/// How the first-pass base QP is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FirstPassQp {
    Fixed(i32),
    /// Integer base QP in `[min, max]` whose predicted total is closest to
    /// the target in the log domain.
    FromTarget { min: i32, max: i32 },
}

impl Default for FirstPassQp {
    fn default() -> Self {
        FirstPassQp::FromTarget { min: 0, max: MAX_QP }
    }
}

/// Where the deficit feedback acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CompensationMode {
    /// Adjust each GOP budget by the deficit accumulated so far.
    #[default]
    Gop,
    /// Additionally rescale the remaining frames of the current GOP after
    /// each frame.
    Frame,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SessionConfig {
    /// Bits per second.
    pub target_bitrate: f64,
    pub frame_rate: f64,
    pub constants: RcConstants,
    pub level_offsets: Vec<i32>,
    pub first_pass: FirstPassQp,
    pub compensation: CompensationMode,
    pub strength: f64,
}

impl SessionConfig {
    pub fn new(target_bitrate: f64, frame_rate: f64, constants: RcConstants) -> Self {
        Self {
            target_bitrate,
            frame_rate,
            constants,
            level_offsets: DEFAULT_LEVEL_OFFSETS.to_vec(),
            first_pass: FirstPassQp::default(),
            compensation: CompensationMode::Gop,
            strength: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), RcError> {
        self.constants.validate()?;
        if !(self.target_bitrate > 0.0 && self.target_bitrate.is_finite()) {
            return Err(RcError::InvalidConstants("target bitrate must be positive".into()));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(RcError::InvalidConstants("frame rate must be positive".into()));
        }
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(RcError::InvalidConstants(format!(
                "compensation strength must lie in (0, 1], got {}",
                self.strength
            )));
        }
        match self.first_pass {
            FirstPassQp::Fixed(q) if !(0..=MAX_QP).contains(&q) => {
                return Err(RcError::InvalidConstants(format!("first-pass QP {q} out of range")))
            }
            FirstPassQp::FromTarget { min, max } if !(0 <= min && min <= max && max <= MAX_QP) => {
                return Err(RcError::InvalidConstants(format!(
                    "first-pass QP range [{min}, {max}] invalid"
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn bits_per_frame(&self) -> f64 {
        self.target_bitrate / self.frame_rate
    }
}

/// Per-frame trace of the loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRcDecision {
    pub frame_index: usize,
    pub frame_type: FrameType,
    pub gop: usize,
    /// First-pass QP.
    pub q: i32,
    pub b_hat: f64,
    /// Share of the GOP budget.
    pub b_prime: f64,
    /// Size the QP update aimed at; equals `b_prime` under GOP compensation.
    pub aim_bits: f64,
    pub q_bar: f64,
    pub q_prime: i32,
    pub clamped: bool,
    pub achieved_bits: f64,
    pub interpolated: bool,
    pub deficit_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RcSessionReport {
    pub sequence_id: String,
    pub base_qp: i32,
    pub gop_count: usize,
    /// In coding order.
    pub decisions: Vec<FrameRcDecision>,
    pub total_target_bits: f64,
    pub total_achieved_bits: f64,
    /// `100·(achieved − target)/target`.
    pub deviation_percent: f64,
    /// Achieved minus target, accumulated frame by frame.
    pub final_deficit: f64,
    /// Portion of the final deficit held back by the budget floor.
    pub carried_deficit: f64,
    pub clamped_frames: usize,
    pub interpolated_frames: usize,
}

/// Frames grouped into rate-control GOPs, each in coding order. The leading
/// I-frame joins the first full GOP.
pub fn rc_gops(seq: &SequenceFeatures) -> Vec<Vec<usize>> {
    let order = decode_order(&seq.roles);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let multi = seq.frame_count() > 1;
    for k in order {
        let g = seq.roles[k].gop_index;
        let g = if multi { g.max(1) } else { g };
        groups.entry(g).or_default().push(k);
    }
    groups.into_values().collect()
}

fn choose_base_qp(
    seq: &SequenceFeatures,
    predictors: &PredictorSet,
    cfg: &SessionConfig,
) -> Result<i32, RcError> {
    let (min, max) = match cfg.first_pass {
        FirstPassQp::Fixed(q) => return Ok(q),
        FirstPassQp::FromTarget { min, max } => (min, max),
    };
    let target = cfg.bits_per_frame() * seq.frame_count() as f64;
    let mut best: Option<(f64, i32)> = None;
    for base in min..=max {
        let qps = cascade_qps(&seq.roles, base, &cfg.level_offsets);
        let total: f64 = predictors.predict_sequence(seq, &qps)?.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        let miss = libm::fabs(libm::log(total / target));
        if best.is_none_or(|(m, _)| miss < m) {
            best = Some((miss, base));
        }
    }
    best.map(|(_, q)| q).ok_or(RcError::NonPositivePrediction {
        index: 0,
        value: 0.0,
    })
}

/// Runs the second pass over one sequence.
pub fn simulate_session<B: RcBackend>(
    seq: &SequenceFeatures,
    predictors: &PredictorSet,
    cfg: &SessionConfig,
    backend: &mut B,
) -> Result<RcSessionReport, RcError> {
    cfg.validate()?;
    for role in &seq.roles {
        if predictors.get(role.frame_type).is_none() {
            return Err(RcError::MissingPredictor(role.frame_type));
        }
    }
    let base_qp = choose_base_qp(seq, predictors, cfg)?;
    let first_qps = cascade_qps(&seq.roles, base_qp, &cfg.level_offsets);
    let b_hat = predictors.predict_sequence(seq, &first_qps)?;
    for (index, &value) in b_hat.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(RcError::NonPositivePrediction { index, value });
        }
    }

    let per_frame = cfg.bits_per_frame();
    let gops = rc_gops(seq);
    let mut decisions = Vec::with_capacity(seq.frame_count());
    let mut deficit = 0.0;
    let mut carried = 0.0;
    let mut total_target = 0.0;
    let mut total_achieved = 0.0;

    for (g, frames) in gops.iter().enumerate() {
        let nominal = per_frame * frames.len() as f64;
        total_target += nominal;
        let comp = compensate(deficit, nominal, cfg.strength);
        carried = comp.carried;
        deficit -= nominal - comp.target;

        let preds: Vec<f64> = frames.iter().map(|&k| b_hat[k]).collect();
        let shares = allocate_gop(comp.target, &preds)?;

        let mut gop_achieved = 0.0;
        let mut gop_allotted = 0.0;
        for (j, &k) in frames.iter().enumerate() {
            let b_prime = shares[j];
            let aim = match cfg.compensation {
                CompensationMode::Gop => b_prime,
                CompensationMode::Frame => {
                    let remaining_budget = comp.target - gop_achieved;
                    let remaining_share = comp.target - gop_allotted;
                    b_prime * (remaining_budget / remaining_share).max(COMPENSATION_FLOOR)
                }
            };
            let role = &seq.roles[k];
            let r = qp_refine(f64::from(first_qps[k]), b_hat[k], aim, &cfg.constants)?;
            let out = backend.encode(k, role.frame_type, r.q_prime)?;
            if !(out.bits >= 0.0 && out.bits.is_finite()) {
                return Err(RcError::BackendMismatch(format!(
                    "frame {k}: backend returned {} bits",
                    out.bits
                )));
            }
            gop_achieved += out.bits;
            gop_allotted += b_prime;
            total_achieved += out.bits;
            deficit += out.bits - b_prime;
            decisions.push(FrameRcDecision {
                frame_index: k,
                frame_type: role.frame_type,
                gop: g,
                q: first_qps[k],
                b_hat: b_hat[k],
                b_prime,
                aim_bits: aim,
                q_bar: r.q_bar,
                q_prime: r.q_prime,
                clamped: r.clamped,
                achieved_bits: out.bits,
                interpolated: out.interpolated,
                deficit_after: deficit,
            });
        }
    }

    let clamped_frames = decisions.iter().filter(|d| d.clamped).count();
    let interpolated_frames = decisions.iter().filter(|d| d.interpolated).count();
    if clamped_frames > 0 {
        log::info!("{}: {clamped_frames} frame QPs clamped to [0, {MAX_QP}]", seq.id);
    }
    Ok(RcSessionReport {
        sequence_id: seq.id.clone(),
        base_qp,
        gop_count: gops.len(),
        decisions,
        total_target_bits: total_target,
        total_achieved_bits: total_achieved,
        deviation_percent: 100.0 * (total_achieved - total_target) / total_target,
        final_deficit: deficit,
        carried_deficit: carried,
        clamped_frames,
        interpolated_frames,
    })
}

/// Least-squares `c_low` from frames logged at several QPs.
///
/// Consecutive QPs `q1 < q2` of the same frame give `q2 − q1 ≈ −c_low·s` with
/// `s = √max(1, q1)·log2(b2/b1)`. Returns `None` without usable pairs.
pub fn calibrate_c_low(records: &[FrameCodingRecord]) -> Option<f64> {
    let mut by_frame: BTreeMap<(&str, usize), BTreeMap<i32, f64>> = BTreeMap::new();
    for r in records {
        if r.bits > 0.0 {
            by_frame
                .entry((r.sequence_id.as_str(), r.frame_index))
                .or_default()
                .insert(r.q, r.bits);
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for table in by_frame.values() {
        let pts: Vec<(i32, f64)> = table.iter().map(|(&q, &b)| (q, b)).collect();
        for w in pts.windows(2) {
            let (q1, b1) = w[0];
            let (q2, b2) = w[1];
            let s = libm::sqrt(f64::from(q1).max(1.0)) * libm::log2(b2 / b1);
            num += f64::from(q2 - q1) * s;
            den += s * s;
        }
    }
    if den > 0.0 {
        let c = -num / den;
        (c > 0.0).then_some(c)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn k() -> RcConstants {
        RcConstants::default()
    }

    #[test]
    fn refine_examples() {
        let r = qp_refine(30.0, 1000.0, 1000.0, &k()).unwrap();
        assert_eq!((r.q_bar, r.q_prime), (30.0, 30));
        let r = qp_refine(25.0, 1000.0, 2000.0, &k()).unwrap();
        assert!((r.q_bar - 20.0).abs() < 1e-12);
        assert_eq!(r.q_prime, 22);
        let r = qp_refine(0.5, 1.0, 4.0, &k()).unwrap();
        assert!((r.q_bar + 1.5).abs() < 1e-12);
        assert!(qp_refine(30.0, 0.0, 1.0, &k()).is_err());
    }

    #[test]
    fn refine_clamps() {
        let r = qp_refine(60.0, 1000.0, 1.0, &k()).unwrap();
        assert_eq!(r.q_prime, MAX_QP);
        assert!(r.clamped);
    }

    #[test]
    fn half_away_rounding() {
        assert_eq!(round_half_away(2.5), 3.0);
        assert_eq!(round_half_away(-2.5), -3.0);
        assert_eq!(round_half_away(2.4999), 2.0);
    }

    #[test]
    fn c_high_interpolation() {
        assert_eq!(c_high_for_height(2160), 0.5);
        assert_eq!(c_high_for_height(4320), 0.5);
        assert_eq!(c_high_for_height(480), 0.25);
        assert_eq!(c_high_for_height(240), 0.25);
        let mid = c_high_for_height(1080);
        assert!(mid > 0.25 && mid < 0.5);
    }

    #[test]
    fn constants_validation() {
        assert!(k().validate().is_ok());
        assert!(RcConstants { c_low: 0.0, ..k() }.validate().is_err());
        assert!(RcConstants { c_high: 1.0, ..k() }.validate().is_err());
        assert!(RcConstants { q_start: 64, ..k() }.validate().is_err());
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_gop(4000.0, &[3.0, 1.0]).unwrap(), vec![3000.0, 1000.0]);
        let eq = allocate_gop(900.0, &[2.0; 3]).unwrap();
        assert!(eq.iter().all(|v| (v - 300.0).abs() < 1e-9));
        assert_eq!(allocate_gop(1.0, &[]), Err(RcError::EmptyGop));
        assert!(matches!(
            allocate_gop(1.0, &[1.0, -1.0]),
            Err(RcError::NonPositivePrediction { index: 1, .. })
        ));
    }

    #[test]
    fn compensation_examples() {
        assert_eq!(compensate(0.0, 5000.0, 1.0).target, 5000.0);
        assert_eq!(compensate(1000.0, 5000.0, 1.0).target, 4000.0);
        assert_eq!(compensate(-1000.0, 5000.0, 1.0).target, 6000.0);
        let c = compensate(10_000.0, 5000.0, 1.0);
        assert_eq!(c.target, 500.0);
        assert_eq!(c.carried, 5500.0);
    }

    #[test]
    fn calibrate_recovers_constant() {
        // bits = 1000 · 2^(−(q − q0)/ (c·√q0)) for adjacent pairs starting at q0.
        let c = 1.7;
        let mut recs = Vec::new();
        for (f, q1) in [(0usize, 20), (1, 30), (2, 40)] {
            let q2 = q1 + 3;
            let b1 = 1000.0;
            let b2 = b1 * libm::exp2(-f64::from(q2 - q1) / (c * libm::sqrt(f64::from(q1))));
            for (q, bits) in [(q1, b1), (q2, b2)] {
                recs.push(FrameCodingRecord {
                    sequence_id: "s".into(),
                    frame_index: f,
                    frame_type: FrameType::I,
                    q,
                    q_ref1: None,
                    q_ref2: None,
                    bits,
                });
            }
        }
        assert!((calibrate_c_low(&recs).unwrap() - c).abs() < 1e-9);
        assert_eq!(calibrate_c_low(&recs[..1]), None);
    }

    #[test]
    fn replay_exact_and_interpolated() {
        let rec = |q, bits| FrameCodingRecord {
            sequence_id: "s".into(),
            frame_index: 0,
            frame_type: FrameType::I,
            q,
            q_ref1: None,
            q_ref2: None,
            bits,
        };
        let recs = [rec(20, 8000.0), rec(30, 1000.0)];
        let mut b = ReplayBackend::from_records(recs.iter()).unwrap();
        assert_eq!(b.encode(0, FrameType::I, 20).unwrap(), BackendBits { bits: 8000.0, interpolated: false });
        let mid = b.encode(0, FrameType::I, 25).unwrap();
        assert!(mid.interpolated);
        assert!((mid.bits - libm::sqrt(8000.0 * 1000.0)).abs() < 1e-6);
        let ext = b.encode(0, FrameType::I, 40).unwrap();
        assert!((ext.bits - 125.0).abs() < 1e-9);
        assert!(matches!(b.encode(1, FrameType::I, 20), Err(RcError::ReplayMiss { .. })));
        assert!(matches!(b.encode(0, FrameType::P, 20), Err(RcError::BackendMismatch(_))));
        let mut single = ReplayBackend::from_records(recs[..1].iter()).unwrap();
        assert!(matches!(single.encode(0, FrameType::I, 21), Err(RcError::ReplayMiss { .. })));
    }
}
