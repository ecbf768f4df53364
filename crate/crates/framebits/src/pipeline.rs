//! End-to-end steps shared by the CLI and the test suites: synthetic
//! corpora, dataset directories, training, cross-validation and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use framebits_core::dataset::{
    build_matrix, kfold_split, qp_sweep, synth_encode, SequenceFeatures, TrainingSet,
};
use framebits_core::gop::{cascade_qps, classify_frames};
use framebits_core::metrics::{mape, r2};
use framebits_core::models::{fit_linear_with, BitPredictor, ForestParams};
use framebits_core::synthetic::{SceneParams, SyntheticSequence};
use framebits_core::{ComplexityRecord, FrameCodingRecord, FrameType, VideoGeometry};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::logs::{read_encoder_log, read_features, write_encoder_log, write_features};
use crate::parallel::{analyze_sequence_par, fit_forest_par};

pub const FEATURES_DIR: &str = "features";
pub const ENCODER_LOG_FILE: &str = "encoder_log.csv";

/// Features of many sequences plus their ground-truth log.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sequences: Vec<SequenceFeatures>,
    pub truth: Vec<FrameCodingRecord>,
}

pub fn synthetic_sequence_id(index: usize) -> String {
    format!("syn{index:03}")
}

/// Features of one synthetic scene.
pub fn synthetic_features(cfg: &RunConfig, index: usize) -> Result<SequenceFeatures> {
    let s = &cfg.synth;
    let geometry = VideoGeometry::new(s.width, s.height, 8)?
        .with_frame_rate(cfg.video.frame_rate)
        .with_frame_count(s.frames);
    let source = SyntheticSequence::new(geometry, SceneParams::random(cfg.seed, index as u64));
    let records = analyze_sequence_par(&source, &cfg.complexity())?;
    let roles = classify_frames(s.frames, &cfg.gop)?;
    Ok(SequenceFeatures::new(synthetic_sequence_id(index), records, roles)?)
}

/// Oracle ground truth over the configured base-QP sweep.
pub fn sweep_truth(cfg: &RunConfig, seq: &SequenceFeatures) -> Result<Vec<FrameCodingRecord>> {
    let d = &cfg.dataset;
    let mut out = Vec::new();
    for base in qp_sweep(d.qp_min, d.qp_max, d.qp_step) {
        let qps = cascade_qps(&seq.roles, base, &d.level_offsets);
        out.extend(synth_encode(seq, &cfg.oracle, &qps)?);
    }
    Ok(out)
}

/// Generates `cfg.synth.sequences` scenes, analyzes them and encodes them
/// with the oracle.
pub fn synthetic_corpus(cfg: &RunConfig) -> Result<Corpus> {
    if cfg.synth.sequences == 0 || cfg.synth.frames == 0 {
        return Err(Error::Usage("synthetic corpus needs at least one sequence and one frame".into()));
    }
    let parts: Vec<(SequenceFeatures, Vec<FrameCodingRecord>)> = (0..cfg.synth.sequences)
        .into_par_iter()
        .map(|i| {
            let seq = synthetic_features(cfg, i)?;
            let truth = sweep_truth(cfg, &seq)?;
            Ok((seq, truth))
        })
        .collect::<Result<_>>()?;
    let (sequences, truth): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok(Corpus {
        sequences,
        truth: truth.into_iter().flatten().collect(),
    })
}

/// Writes `features/<id>.csv` per sequence and `encoder_log.csv`.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    let fdir = dir.join(FEATURES_DIR);
    fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
    for s in &corpus.sequences {
        write_features(fdir.join(format!("{}.csv", s.id)), &s.records)?;
    }
    write_encoder_log(dir.join(ENCODER_LOG_FILE), &corpus.truth)?;
    Ok(())
}

/// Pairs analyzer records with GOP roles.
pub fn sequence_from_records(
    cfg: &RunConfig,
    id: &str,
    records: Vec<ComplexityRecord>,
) -> Result<SequenceFeatures> {
    let roles = classify_frames(records.len(), &cfg.gop)?;
    Ok(SequenceFeatures::new(id, records, roles)?)
}

/// Reads a dataset directory written by [`save_corpus`] (or assembled by
/// hand from `analyze` outputs and an encoder log).
pub fn load_corpus(dir: &Path, cfg: &RunConfig) -> Result<Corpus> {
    let fdir = dir.join(FEATURES_DIR);
    let entries = fs::read_dir(&fdir).map_err(|e| Error::io(&fdir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut sequences = Vec::with_capacity(paths.len());
    for p in &paths {
        let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        sequences.push(sequence_from_records(cfg, &id, read_features(p)?)?);
    }
    let log_path = dir.join(ENCODER_LOG_FILE);
    let truth = read_encoder_log(&log_path)?;
    let roles: BTreeMap<&str, &SequenceFeatures> = sequences.iter().map(|s| (s.id.as_str(), s)).collect();
    for id in truth.iter().map(|t| t.sequence_id.as_str()).collect::<std::collections::BTreeSet<_>>() {
        let seq = roles.get(id).ok_or_else(|| {
            Error::Dataset(framebits_core::dataset::DatasetError::Misalignment(format!(
                "encoder log mentions {id:?} but {} has no features for it",
                fdir.display()
            )))
        })?;
        crate::logs::check_roles(&log_path, &truth, id, &seq.roles)?;
    }
    Ok(Corpus { sequences, truth })
}

/// Fits one model on a whole training set.
pub fn train_model(set: &TrainingSet, kind: ModelKind, forest: ForestParams, seed: u64) -> Result<BitPredictor> {
    let names = set.feature_names.clone();
    let model = match kind {
        ModelKind::Linear => {
            let mut m = fit_linear_with(&set.x, &set.y, names, forest.label)?;
            m.frame_type = Some(set.frame_type);
            BitPredictor::Linear(m)
        }
        ModelKind::Forest => {
            let mut m = fit_forest_par(&set.x, &set.y, names, forest, seed)?;
            m.frame_type = Some(set.frame_type);
            BitPredictor::Forest(m)
        }
    };
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub mape: f64,
    pub r2: f64,
}

/// Out-of-fold prediction for one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutOfFold {
    pub sequence_id: String,
    pub frame_index: usize,
    pub q: i32,
    pub bits: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub frame_type: FrameType,
    pub model: ModelKind,
    pub use_chroma: bool,
    pub folds: Vec<FoldMetrics>,
    /// Averages over folds.
    pub mape: f64,
    pub r2: f64,
    /// Metrics over all out-of-fold predictions at once.
    pub pooled_mape: f64,
    pub pooled_r2: f64,
    #[serde(skip)]
    pub predictions: Vec<OutOfFold>,
}

/// k-fold cross-validation split by sequence.
pub fn cross_validate(
    set: &TrainingSet,
    kind: ModelKind,
    forest: ForestParams,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    let splits = kfold_split(&set.sequence_ids(), folds, seed)?;
    let mut fold_metrics = Vec::with_capacity(splits.len());
    let mut predictions = Vec::with_capacity(set.len());
    for (f, split) in splits.iter().enumerate() {
        let train = set.subset(&set.rows_for(&split.train));
        let test = set.subset(&set.rows_for(&split.test));
        let model = train_model(&train, kind, forest, seed)?;
        let pred = model.predict(&test.x)?;
        fold_metrics.push(FoldMetrics {
            fold: f,
            train_rows: train.len(),
            test_rows: test.len(),
            mape: mape(&test.y, &pred)?,
            r2: r2(&test.y, &pred)?,
        });
        for ((key, &bits), &p) in test.keys.iter().zip(&test.y).zip(&pred) {
            predictions.push(OutOfFold {
                sequence_id: key.sequence_id.clone(),
                frame_index: key.frame_index,
                q: key.q,
                bits,
                predicted: p,
            });
        }
    }
    let n = fold_metrics.len() as f64;
    let y: Vec<f64> = predictions.iter().map(|p| p.bits).collect();
    let yhat: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    Ok(CvReport {
        frame_type: set.frame_type,
        model: kind,
        use_chroma: set.use_chroma,
        mape: fold_metrics.iter().map(|f| f.mape).sum::<f64>() / n,
        r2: fold_metrics.iter().map(|f| f.r2).sum::<f64>() / n,
        pooled_mape: mape(&y, &yhat)?,
        pooled_r2: r2(&y, &yhat)?,
        folds: fold_metrics,
        predictions,
    })
}

/// Builds the matrix for one frame type and cross-validates it.
pub fn evaluate_frame_type(
    corpus: &Corpus,
    frame_type: FrameType,
    use_chroma: bool,
    kind: ModelKind,
    cfg: &RunConfig,
) -> Result<CvReport> {
    let set = build_matrix(&corpus.sequences, &corpus.truth, frame_type, use_chroma)?;
    cross_validate(&set, kind, cfg.forest, cfg.training.folds, cfg.seed)
}

fn model_label(kind: ModelKind, use_chroma: bool) -> String {
    let base = match kind {
        ModelKind::Linear => "Linear regression",
        ModelKind::Forest => "Random forest",
    };
    if use_chroma {
        base.to_string()
    } else {
        format!("{base} (no chroma)")
    }
}

/// R² and MAPE per frame type, one row per model variant.
pub fn accuracy_table(reports: &[CvReport]) -> String {
    let mut rows: BTreeMap<(u8, bool), BTreeMap<FrameType, &CvReport>> = BTreeMap::new();
    for r in reports {
        let k = (matches!(r.model, ModelKind::Forest) as u8, !r.use_chroma);
        rows.entry(k).or_default().insert(r.frame_type, r);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<30} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}",
        "model", "R2 I", "R2 P", "R2 B", "MAPE I", "MAPE P", "MAPE B"
    );
    for ((forest, no_chroma), by_type) in &rows {
        let kind = if *forest == 1 { ModelKind::Forest } else { ModelKind::Linear };
        let _ = write!(out, "{:<30}", model_label(kind, !no_chroma));
        for ft in FrameType::ALL {
            match by_type.get(&ft) {
                Some(r) => {
                    let _ = write!(out, " {:>8.3}", r.r2);
                }
                None => out.push_str(&format!(" {:>8}", "-")),
            }
        }
        for ft in FrameType::ALL {
            match by_type.get(&ft) {
                Some(r) => {
                    let _ = write!(out, " {:>8.2}%", r.mape);
                }
                None => out.push_str(&format!(" {:>9}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

/// One row of the rate-control summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RcSummaryRow {
    pub label: String,
    pub sequence_id: String,
    pub target_bits: f64,
    pub achieved_bits: f64,
    pub deviation_percent: f64,
    pub seconds: f64,
}

pub fn rate_control_table(rows: &[RcSummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<10} {:>14} {:>14} {:>12} {:>9}",
        "run", "sequence", "target bits", "achieved bits", "deviation", "time [s]"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<24} {:<10} {:>14.0} {:>14.0} {:>11.2}% {:>9.2}",
            r.label, r.sequence_id, r.target_bits, r.achieved_bits, r.deviation_percent, r.seconds
        );
    }
    out
}
