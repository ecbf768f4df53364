//! CSV formats: encoder logs, per-frame features, training matrices,
//! predictions and rate-quality curves.
//!
//! Writers put a `# schema: <name>/<version>` comment on the first line.
//! Readers accept files without it and reject a known name with another
//! version.

use std::fs;
use std::path::{Path, PathBuf};

use framebits_core::complexity::SUPPORTED_GAPS;
use framebits_core::dataset::{DatasetError, TrainingSet};
use framebits_core::metrics::RdPoint;
use framebits_core::{ComplexityRecord, FrameCodingRecord, FrameRole, FrameType};
use thiserror::Error;

pub const ENCODER_LOG_SCHEMA: &str = "framebits-encoder-log/1";
pub const FEATURES_SCHEMA: &str = "framebits-features/1";
pub const MATRIX_SCHEMA: &str = "framebits-matrix/1";
pub const PREDICTIONS_SCHEMA: &str = "framebits-predictions/1";
pub const RD_SCHEMA: &str = "framebits-rd/1";

pub const ENCODER_LOG_HEADER: [&str; 7] = [
    "sequence_id",
    "frame_index",
    "frame_type",
    "q",
    "q_ref1",
    "q_ref2",
    "bits",
];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: schema error: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Invariant {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

impl LogError {
    /// Content rejected by a data rule rather than a syntax or IO failure.
    pub fn is_data_error(&self) -> bool {
        matches!(self, LogError::Schema { .. } | LogError::Invariant { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> LogError + '_ {
    move |source| LogError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `path`, checks an optional schema comment, and returns the text.
fn read_text(path: &Path, schema: &str) -> Result<String, LogError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if let Some(found) = text.lines().next().and_then(|l| l.strip_prefix("# schema:")) {
        let found = found.trim();
        let (name, _) = schema.split_once('/').unwrap_or((schema, ""));
        if found != schema && found.split_once('/').map(|(n, _)| n) == Some(name) {
            return Err(LogError::Schema {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unsupported schema version {found:?}, expected {schema:?}"),
            });
        }
    }
    Ok(text)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn writer(path: &Path, schema: &str) -> Result<csv::Writer<fs::File>, LogError> {
    use std::io::Write;
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    writeln!(file, "# schema: {schema}").map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// Column positions by name; errors name the first missing column.
fn columns(path: &Path, headers: &csv::StringRecord, want: &[&str], line: u64) -> Result<Vec<usize>, LogError> {
    want.iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| LogError::Schema {
                path: path.to_path_buf(),
                line,
                message: format!("missing column {name:?}"),
            })
        })
        .collect()
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    fn raw(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, col: usize, name: &str) -> Result<T, LogError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(col);
        raw.parse().map_err(|e| LogError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: format!("{name} = {raw:?}: {e}"),
        })
    }

    fn optional<T: std::str::FromStr>(&self, col: usize, name: &str) -> Result<Option<T>, LogError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.parse(col, name).map(Some)
        }
    }
}

pub fn parse_encoder_log(path: &Path, text: &str) -> Result<Vec<FrameCodingRecord>, LogError> {
    let mut rdr = reader(text);
    let header_line = text.lines().position(|l| !l.starts_with('#')).unwrap_or(0) as u64 + 1;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let cols = columns(path, &headers, &ENCODER_LOG_HEADER, header_line)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => LogError::Parse {
                path: path.to_path_buf(),
                line: p.line(),
                message: e.to_string(),
            },
            None => LogError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { path, line, rec: &rec };
        let r = FrameCodingRecord {
            sequence_id: row.raw(cols[0]).to_string(),
            frame_index: row.parse(cols[1], "frame_index")?,
            frame_type: row.parse::<FrameType>(cols[2], "frame_type")?,
            q: row.parse(cols[3], "q")?,
            q_ref1: row.optional(cols[4], "q_ref1")?,
            q_ref2: row.optional(cols[5], "q_ref2")?,
            bits: row.parse(cols[6], "bits")?,
        };
        if r.sequence_id.is_empty() {
            return Err(LogError::Schema {
                path: path.to_path_buf(),
                line,
                message: "empty sequence_id".into(),
            });
        }
        r.validate().map_err(|e| data_error(path, line, e))?;
        out.push(r);
    }
    Ok(out)
}

fn data_error(path: &Path, line: u64, e: DatasetError) -> LogError {
    match e {
        DatasetError::Schema(message) => LogError::Schema {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => LogError::Invariant {
            path: path.to_path_buf(),
            line,
            message: other.to_string(),
        },
    }
}

/// Reads and validates an encoder log.
pub fn read_encoder_log(path: impl AsRef<Path>) -> Result<Vec<FrameCodingRecord>, LogError> {
    let path = path.as_ref();
    let text = read_text(path, ENCODER_LOG_SCHEMA)?;
    parse_encoder_log(path, &text)
}

/// Checks logged frame types against the GOP plan of the sequence.
pub fn check_roles(
    path: &Path,
    records: &[FrameCodingRecord],
    sequence_id: &str,
    roles: &[FrameRole],
) -> Result<(), LogError> {
    for r in records.iter().filter(|r| r.sequence_id == sequence_id) {
        let role = roles.get(r.frame_index).ok_or_else(|| LogError::Invariant {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{sequence_id}: frame {} beyond the sequence", r.frame_index),
        })?;
        if role.frame_type != r.frame_type {
            return Err(LogError::Invariant {
                path: path.to_path_buf(),
                line: 0,
                message: format!(
                    "{sequence_id}: frame {} logged as {} but planned as {}",
                    r.frame_index, r.frame_type, role.frame_type
                ),
            });
        }
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_encoder_log(path: impl AsRef<Path>, records: &[FrameCodingRecord]) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut w = writer(path, ENCODER_LOG_SCHEMA)?;
    w.write_record(ENCODER_LOG_HEADER).map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            r.sequence_id.clone(),
            r.frame_index.to_string(),
            r.frame_type.to_string(),
            r.q.to_string(),
            opt(r.q_ref1),
            opt(r.q_ref2),
            r.bits.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn feature_header() -> Vec<String> {
    let mut h: Vec<String> = ["frame_index", "E_Y", "L_Y", "E_U", "L_U", "E_V", "L_V"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(SUPPORTED_GAPS.iter().map(|g| format!("h_gap{g}")));
    h
}

pub fn write_features(path: impl AsRef<Path>, records: &[ComplexityRecord]) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut w = writer(path, FEATURES_SCHEMA)?;
    w.write_record(feature_header()).map_err(csv_err(path))?;
    for r in records {
        let mut row = vec![
            r.frame_index.to_string(),
            r.e_y.to_string(),
            r.l_y.to_string(),
            r.e_u.to_string(),
            r.l_u.to_string(),
            r.e_v.to_string(),
            r.l_v.to_string(),
        ];
        row.extend(r.h_by_gap.iter().map(|h| opt(*h)));
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<ComplexityRecord>, LogError> {
    let path = path.as_ref();
    let text = read_text(path, FEATURES_SCHEMA)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let header = feature_header();
    let want: Vec<&str> = header.iter().map(String::as_str).collect();
    let cols = columns(path, &headers, &want, 1)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = Row { path, line, rec: &rec };
        let mut r = ComplexityRecord::new(row.parse(cols[0], "frame_index")?);
        r.e_y = row.parse(cols[1], "E_Y")?;
        r.l_y = row.parse(cols[2], "L_Y")?;
        r.e_u = row.parse(cols[3], "E_U")?;
        r.l_u = row.parse(cols[4], "L_U")?;
        r.e_v = row.parse(cols[5], "E_V")?;
        r.l_v = row.parse(cols[6], "L_V")?;
        for (slot, &c) in cols[7..].iter().enumerate() {
            r.h_by_gap[slot] = row.optional(c, &want[7 + slot])?;
        }
        let values = [r.e_y, r.l_y, r.e_u, r.l_u, r.e_v, r.l_v]
            .into_iter()
            .chain(r.h_by_gap.iter().flatten().copied());
        for v in values {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LogError::Invariant {
                    path: path.to_path_buf(),
                    line,
                    message: format!("feature value {v} is not a finite non-negative number"),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Training matrix with row keys and the label column.
pub fn write_matrix(path: impl AsRef<Path>, set: &TrainingSet) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut w = writer(path, MATRIX_SCHEMA)?;
    let mut header = vec!["sequence_id".to_string(), "frame_index".into()];
    header.extend(set.feature_names.iter().cloned());
    header.push("bits".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, key) in set.keys.iter().enumerate() {
        let mut row = vec![key.sequence_id.clone(), key.frame_index.to_string()];
        row.extend(set.x.row(i).iter().map(|v| v.to_string()));
        row.push(set.y[i].to_string());
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictionRow {
    pub sequence_id: String,
    pub frame_index: usize,
    pub frame_type: FrameType,
    pub q: i32,
    /// Ground truth when known.
    pub bits: Option<f64>,
    pub predicted: f64,
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut w = writer(path, PREDICTIONS_SCHEMA)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    if rows.is_empty() {
        w.write_record(["sequence_id", "frame_index", "frame_type", "q", "bits", "predicted"])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>, LogError> {
    let path = path.as_ref();
    let text = read_text(path, PREDICTIONS_SCHEMA)?;
    let mut rdr = reader(&text);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PredictionRow = row.map_err(|e| LogError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, serde::Deserialize)]
struct RdRow {
    rate: f64,
    quality: Option<f64>,
    psnr_y: Option<f64>,
    psnr_u: Option<f64>,
    psnr_v: Option<f64>,
}

/// Rate-quality curve: `rate` plus either `quality` or the three plane PSNRs
/// (combined as `(6Y + U + V) / 8`).
pub fn read_rd_curve(path: impl AsRef<Path>) -> Result<Vec<RdPoint>, LogError> {
    let path = path.as_ref();
    let text = read_text(path, RD_SCHEMA)?;
    let mut rdr = reader(&text);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: RdRow = row.map_err(|e| LogError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let quality = match (row.quality, row.psnr_y, row.psnr_u, row.psnr_v) {
            (Some(q), ..) => q,
            (None, Some(y), Some(u), Some(v)) => framebits_core::metrics::combined_yuv_psnr(y, u, v),
            _ => {
                return Err(LogError::Schema {
                    path: path.to_path_buf(),
                    line: 0,
                    message: "each row needs quality or psnr_y, psnr_u and psnr_v".into(),
                })
            }
        };
        out.push(RdPoint::new(row.rate, quality));
    }
    Ok(out)
}

pub fn write_rd_curve(path: impl AsRef<Path>, points: &[RdPoint]) -> Result<(), LogError> {
    let path = path.as_ref();
    let mut w = writer(path, RD_SCHEMA)?;
    w.write_record(["rate", "quality"]).map_err(csv_err(path))?;
    for p in points {
        w.write_record([p.rate.to_string(), p.quality.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
