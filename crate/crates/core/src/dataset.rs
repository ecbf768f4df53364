//! Training data assembly: joins complexity records, GOP roles and encoder
//! ground truth into per-frame-type feature matrices.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::complexity::{ComplexityRecord, SUPPORTED_GAPS};
use crate::gop::{FrameRole, MAX_QP};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("sequence {sequence}, frame {frame}: no temporal gradient available for reference distance {distance}")]
    MissingFeature {
        sequence: String,
        frame: usize,
        distance: usize,
    },
    #[error("misaligned inputs: {0}")]
    Misalignment(String),
    #[error("need at least {need} distinct sequences for the split, have {have}")]
    TooFewSequences { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FrameType {
    I,
    P,
    B,
}

impl FrameType {
    pub const ALL: [FrameType; 3] = [FrameType::I, FrameType::P, FrameType::B];

    /// Number of references the type predicts from.
    pub fn ref_count(self) -> usize {
        match self {
            FrameType::I => 0,
            FrameType::P => 1,
            FrameType::B => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::B => "B",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "i" => Ok(FrameType::I),
            "P" | "p" => Ok(FrameType::P),
            "B" | "b" => Ok(FrameType::B),
            other => Err(DatasetError::Schema(format!("unknown frame type {other:?}"))),
        }
    }
}

/// Ground truth for one encoded frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameCodingRecord {
    pub sequence_id: String,
    pub frame_index: usize,
    pub frame_type: FrameType,
    pub q: i32,
    pub q_ref1: Option<i32>,
    pub q_ref2: Option<i32>,
    pub bits: f64,
}

impl FrameCodingRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0..=MAX_QP).contains(&self.q) {
            return Err(DatasetError::InvariantViolation(format!(
                "{}#{}: q = {} outside [0, 63]",
                self.sequence_id, self.frame_index, self.q
            )));
        }
        if !(self.bits.is_finite() && self.bits > 0.0) {
            return Err(DatasetError::InvariantViolation(format!(
                "{}#{}: bits must be positive, got {}",
                self.sequence_id, self.frame_index, self.bits
            )));
        }
        let want = self.frame_type.ref_count();
        let refs = [self.q_ref1, self.q_ref2];
        for (slot, q) in refs.iter().enumerate() {
            if q.is_some() != (slot < want) {
                return Err(DatasetError::Schema(format!(
                    "{}#{}: {}-frame {} q_ref{}",
                    self.sequence_id,
                    self.frame_index,
                    self.frame_type,
                    if slot < want { "requires" } else { "must not carry" },
                    slot + 1
                )));
            }
            if let Some(q) = q {
                if !(0..=MAX_QP).contains(q) {
                    return Err(DatasetError::InvariantViolation(format!(
                        "{}#{}: q_ref{} = {q} outside [0, 63]",
                        self.sequence_id,
                        self.frame_index,
                        slot + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ref_qps(&self) -> Vec<i32> {
        [self.q_ref1, self.q_ref2].into_iter().flatten().collect()
    }
}

/// Analyzer output and GOP roles of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub id: String,
    pub records: Vec<ComplexityRecord>,
    pub roles: Vec<FrameRole>,
}

impl SequenceFeatures {
    pub fn new(
        id: impl Into<String>,
        records: Vec<ComplexityRecord>,
        roles: Vec<FrameRole>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        if records.len() != roles.len() {
            return Err(DatasetError::Misalignment(format!(
                "{id}: {} complexity records vs {} GOP roles",
                records.len(),
                roles.len()
            )));
        }
        for (k, (r, role)) in records.iter().zip(&roles).enumerate() {
            if r.frame_index != k || role.frame_index != k {
                return Err(DatasetError::Misalignment(format!(
                    "{id}: frame {k} out of order"
                )));
            }
        }
        Ok(Self { id, records, roles })
    }

    pub fn frame_count(&self) -> usize {
        self.records.len()
    }

    /// Whether any frame carries a temporal gradient.
    pub fn has_temporal_features(&self) -> bool {
        self.records.iter().any(|r| r.available_gaps().next().is_some())
    }

    /// Temporal gradients for each reference of frame `k`, in `refs` order.
    ///
    /// A past reference at distance `d` uses `h` at gap `d` of frame `k`; a
    /// future one uses `h` at gap `d` of the reference itself (the gradient is
    /// symmetric). When `d` was not analyzed, the nearest analyzed gap stands in.
    pub fn reference_gradients(&self, k: usize) -> Result<Vec<f64>, DatasetError> {
        let role = &self.roles[k];
        let mut out = Vec::with_capacity(role.refs.len());
        for &r in &role.refs {
            let distance = k.abs_diff(r);
            let owner = if r < k { k } else { r };
            let rec = self.records.get(owner).ok_or_else(|| {
                DatasetError::Misalignment(format!(
                    "{}: reference frame {r} of frame {k} has no complexity record",
                    self.id
                ))
            })?;
            let h = nearest_gap(rec, distance).ok_or(DatasetError::MissingFeature {
                sequence: self.id.clone(),
                frame: k,
                distance,
            })?;
            out.push(h);
        }
        Ok(out)
    }
}

fn nearest_gap(rec: &ComplexityRecord, distance: usize) -> Option<f64> {
    SUPPORTED_GAPS
        .iter()
        .filter_map(|&g| rec.h(g).map(|h| (g, h)))
        .min_by_key(|(g, _)| (*g as usize).abs_diff(distance))
        .map(|(_, h)| h)
}

const I_NAMES: [&str; 7] = ["E_Y", "L_Y", "E_U", "L_U", "E_V", "L_V", "q"];
const P_NAMES: [&str; 9] = ["E_Y", "h_ref", "L_Y", "E_U", "L_U", "E_V", "L_V", "q", "q_ref"];
const B_NAMES: [&str; 11] = [
    "E_Y", "h_ref1", "h_ref2", "L_Y", "E_U", "L_U", "E_V", "L_V", "q", "q_ref1", "q_ref2",
];
const CHROMA: [&str; 4] = ["E_U", "L_U", "E_V", "L_V"];

/// Column names for a frame type, in model input order.
pub fn feature_names(frame_type: FrameType, use_chroma: bool) -> Vec<&'static str> {
    let all: &[&str] = match frame_type {
        FrameType::I => &I_NAMES,
        FrameType::P => &P_NAMES,
        FrameType::B => &B_NAMES,
    };
    all.iter()
        .copied()
        .filter(|n| use_chroma || !CHROMA.contains(n))
        .collect()
}

/// Model input row for one frame.
///
/// `h_refs` and `q_refs` carry one entry per reference of `frame_type`.
pub fn feature_vector(
    frame_type: FrameType,
    rec: &ComplexityRecord,
    h_refs: &[f64],
    q: f64,
    q_refs: &[f64],
    use_chroma: bool,
) -> Vec<f64> {
    debug_assert_eq!(h_refs.len(), frame_type.ref_count());
    debug_assert_eq!(q_refs.len(), frame_type.ref_count());
    let mut row = Vec::with_capacity(11);
    row.push(rec.e_y);
    row.extend_from_slice(h_refs);
    row.push(rec.l_y);
    if use_chroma {
        row.extend_from_slice(&[rec.e_u, rec.l_u, rec.e_v, rec.l_v]);
    }
    row.push(q);
    row.extend_from_slice(q_refs);
    row
}

/// Identifies the source of one training row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowKey {
    pub sequence_id: String,
    pub frame_index: usize,
    pub q: i32,
}

/// Feature matrix and labels for one frame type.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub frame_type: FrameType,
    pub use_chroma: bool,
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub keys: Vec<RowKey>,
    /// Rows dropped because a temporal gradient was undefined for the frame.
    pub excluded: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Row indices whose sequence is in `ids`.
    pub fn rows_for(&self, ids: &BTreeSet<String>) -> Vec<usize> {
        self.keys
            .iter()
            .enumerate()
            .filter(|(_, k)| ids.contains(&k.sequence_id))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            frame_type: self.frame_type,
            use_chroma: self.use_chroma,
            feature_names: self.feature_names.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            excluded: 0,
        }
    }

    pub fn sequence_ids(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.keys.iter().map(|k| &k.sequence_id).collect();
        set.into_iter().cloned().collect()
    }
}

/// Builds the matrix of `frame_type` rows from `truth`, looking features up
/// in `sequences` by sequence id and frame index.
pub fn build_matrix(
    sequences: &[SequenceFeatures],
    truth: &[FrameCodingRecord],
    frame_type: FrameType,
    use_chroma: bool,
) -> Result<TrainingSet, DatasetError> {
    let by_id: BTreeMap<&str, &SequenceFeatures> =
        sequences.iter().map(|s| (s.id.as_str(), s)).collect();
    let names = feature_names(frame_type, use_chroma);
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut keys = Vec::new();
    let mut excluded = 0usize;
    for t in truth.iter().filter(|t| t.frame_type == frame_type) {
        t.validate()?;
        let seq = by_id.get(t.sequence_id.as_str()).ok_or_else(|| {
            DatasetError::Misalignment(format!("no features for sequence {:?}", t.sequence_id))
        })?;
        let k = t.frame_index;
        let (rec, role) = match (seq.records.get(k), seq.roles.get(k)) {
            (Some(r), Some(role)) => (r, role),
            _ => {
                return Err(DatasetError::Misalignment(format!(
                    "{}: frame {k} beyond the {} analyzed frames",
                    seq.id,
                    seq.frame_count()
                )))
            }
        };
        if role.frame_type != t.frame_type {
            return Err(DatasetError::Misalignment(format!(
                "{}: frame {k} logged as {} but the GOP structure makes it {}",
                seq.id, t.frame_type, role.frame_type
            )));
        }
        let h_refs = match seq.reference_gradients(k) {
            Ok(h) => h,
            Err(DatasetError::MissingFeature { .. }) if seq.has_temporal_features() => {
                // gaps were analyzed, but none is defined this early in the sequence
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let q_refs: Vec<f64> = t.ref_qps().into_iter().map(f64::from).collect();
        data.extend(feature_vector(
            frame_type,
            rec,
            &h_refs,
            f64::from(t.q),
            &q_refs,
            use_chroma,
        ));
        y.push(t.bits);
        keys.push(RowKey {
            sequence_id: t.sequence_id.clone(),
            frame_index: k,
            q: t.q,
        });
    }
    if excluded > 0 {
        log::info!("{frame_type}-frames: excluded {excluded} rows without temporal gradients");
    }
    Ok(TrainingSet {
        frame_type,
        use_chroma,
        feature_names: names.iter().map(|s| s.to_string()).collect(),
        x: Matrix::from_vec(y.len(), names.len(), data),
        y,
        keys,
        excluded,
    })
}

/// Base QPs `min, min+step, …, ≤ max`.
pub fn qp_sweep(min: i32, max: i32, step: i32) -> Vec<i32> {
    let step = step.max(1);
    (min..=max).step_by(step as usize).collect()
}

/// Coefficients of the parametric bits model for one frame type:
/// `bits = alpha · (1 + beta_e·E_Y + beta_c·(E_U + E_V) + beta_h·Σh_ref) · 2^(−(q − 24)/gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OracleCoefficients {
    pub alpha: f64,
    pub beta_e: f64,
    pub beta_c: f64,
    pub beta_h: f64,
    pub gamma: f64,
}

/// QP at which the oracle's exponential factor is 1.
pub const ORACLE_PIVOT_QP: f64 = 24.0;

/// Stand-in encoder: per-type coefficients plus multiplicative uniform noise
/// in `(−epsilon, +epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SyntheticOracleParams {
    pub i: OracleCoefficients,
    pub p: OracleCoefficients,
    pub b: OracleCoefficients,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SyntheticOracleParams {
    fn default() -> Self {
        Self {
            i: OracleCoefficients {
                alpha: 60_000.0,
                beta_e: 0.12,
                beta_c: 0.15,
                beta_h: 0.0,
                gamma: 6.0,
            },
            p: OracleCoefficients {
                alpha: 16_000.0,
                beta_e: 0.08,
                beta_c: 0.10,
                beta_h: 0.5,
                gamma: 6.0,
            },
            b: OracleCoefficients {
                alpha: 5_000.0,
                beta_e: 0.06,
                beta_c: 0.08,
                beta_h: 0.6,
                gamma: 6.0,
            },
            epsilon: 0.1,
            seed: 0,
        }
    }
}

/// Content terms the oracle reads for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDrivers {
    pub e_y: f64,
    pub e_chroma: f64,
    pub h_sum: f64,
}

impl OracleDrivers {
    pub fn new(rec: &ComplexityRecord, h_refs: &[f64]) -> Self {
        Self {
            e_y: rec.e_y,
            e_chroma: rec.e_u + rec.e_v,
            h_sum: h_refs.iter().sum(),
        }
    }
}

impl SyntheticOracleParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, c) in [("I", &self.i), ("P", &self.p), ("B", &self.b)] {
            if !(c.alpha > 0.0 && c.gamma > 0.0) {
                return Err(DatasetError::InvariantViolation(format!(
                    "oracle {name}: alpha and gamma must be positive"
                )));
            }
            if c.beta_e < 0.0 || c.beta_c < 0.0 || c.beta_h < 0.0 {
                return Err(DatasetError::InvariantViolation(format!(
                    "oracle {name}: content coefficients must be non-negative"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(DatasetError::InvariantViolation(format!(
                "oracle epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn coefficients(&self, frame_type: FrameType) -> &OracleCoefficients {
        match frame_type {
            FrameType::I => &self.i,
            FrameType::P => &self.p,
            FrameType::B => &self.b,
        }
    }

    pub fn noiseless_bits(&self, frame_type: FrameType, d: OracleDrivers, q: f64) -> f64 {
        let c = self.coefficients(frame_type);
        let content = 1.0 + c.beta_e * d.e_y + c.beta_c * d.e_chroma + c.beta_h * d.h_sum;
        c.alpha * content * libm::exp2(-(q - ORACLE_PIVOT_QP) / c.gamma)
    }

    /// Noisy bits; the noise draw is keyed by (sequence, frame, q) so a
    /// repeated query returns the same value.
    pub fn bits(
        &self,
        sequence_id: &str,
        frame_index: usize,
        frame_type: FrameType,
        d: OracleDrivers,
        q: i32,
    ) -> f64 {
        let clean = self.noiseless_bits(frame_type, d, f64::from(q));
        if self.epsilon == 0.0 {
            return clean;
        }
        let mut r = rng::stream(
            self.seed,
            &[rng::hash_str(sequence_id), frame_index as u64, q as u64],
        );
        let noise: f64 = r.random_range(-self.epsilon..self.epsilon);
        clean * (1.0 + noise)
    }
}

/// Synthetic ground truth for one sequence at the given per-frame QPs.
pub fn synth_encode(
    seq: &SequenceFeatures,
    params: &SyntheticOracleParams,
    qps: &[i32],
) -> Result<Vec<FrameCodingRecord>, DatasetError> {
    params.validate()?;
    if qps.len() != seq.frame_count() {
        return Err(DatasetError::Misalignment(format!(
            "{}: {} QPs for {} frames",
            seq.id,
            qps.len(),
            seq.frame_count()
        )));
    }
    let mut out = Vec::with_capacity(qps.len());
    for (k, role) in seq.roles.iter().enumerate() {
        let h_refs = seq.reference_gradients(k)?;
        let drivers = OracleDrivers::new(&seq.records[k], &h_refs);
        let q = qps[k];
        let mut ref_q = role.refs.iter().map(|&r| qps[r]);
        out.push(FrameCodingRecord {
            sequence_id: seq.id.clone(),
            frame_index: k,
            frame_type: role.frame_type,
            q,
            q_ref1: ref_q.next(),
            q_ref2: ref_q.next(),
            bits: params.bits(&seq.id, k, role.frame_type, drivers, q),
        });
    }
    Ok(out)
}

/// One cross-validation fold, split by sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Seeded k-fold partition of distinct sequence ids.
pub fn kfold_split<S: AsRef<str>>(
    sequence_ids: &[S],
    k: usize,
    seed: u64,
) -> Result<Vec<Fold>, DatasetError> {
    let unique: BTreeSet<&str> = sequence_ids.iter().map(|s| s.as_ref()).collect();
    let need = k.max(2);
    if k < 2 || unique.len() < k {
        return Err(DatasetError::TooFewSequences {
            have: unique.len(),
            need,
        });
    }
    let mut ids: Vec<&str> = unique.into_iter().collect();
    ids.shuffle(&mut rng::stream(seed, &[0x006b_666f_6c64]));
    let folds = (0..k)
        .map(|f| {
            let mut fold = Fold {
                train: BTreeSet::new(),
                test: BTreeSet::new(),
            };
            for (i, id) in ids.iter().enumerate() {
                let side = if i % k == f { &mut fold.test } else { &mut fold.train };
                side.insert(id.to_string());
            }
            fold
        })
        .collect();
    Ok(folds)
}
