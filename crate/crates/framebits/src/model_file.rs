//! Versioned JSON model files.
//!
//! ```json
//! { "format": "framebits-model", "version": 1, "model": { "kind": "forest", ... } }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use framebits_core::models::BitPredictor;
use framebits_core::FrameType;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "framebits-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: model file version {found}, this build reads version {MODEL_VERSION}")]
    VersionMismatch { path: PathBuf, found: u64 },
    #[error("{path}: corrupt model file: {message}")]
    CorruptFile { path: PathBuf, message: String },
}

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'static str,
    version: u32,
    model: &'a BitPredictor,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u64,
}

#[derive(Deserialize)]
struct Body {
    model: BitPredictor,
}

pub fn to_json(model: &BitPredictor) -> String {
    serde_json::to_string(&Envelope {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        model,
    })
    .expect("models serialize to JSON")
}

pub fn from_json(path: &Path, text: &str) -> Result<BitPredictor, ModelFileError> {
    let corrupt = |message: String| ModelFileError::CorruptFile {
        path: path.to_path_buf(),
        message,
    };
    let header: Header = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if header.format != MODEL_FORMAT {
        return Err(corrupt(format!("format {:?} is not {MODEL_FORMAT:?}", header.format)));
    }
    if header.version != u64::from(MODEL_VERSION) {
        return Err(ModelFileError::VersionMismatch {
            path: path.to_path_buf(),
            found: header.version,
        });
    }
    let body: Body = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    match &body.model {
        BitPredictor::Forest(f) => f
            .validate()
            .map_err(|(tree, why)| corrupt(format!("tree {tree}: {why}")))?,
        BitPredictor::Linear(l) => {
            if l.weights.len() != l.feature_names.len() {
                return Err(corrupt("weight count differs from feature count".into()));
            }
        }
    }
    Ok(body.model)
}

pub fn save_model(path: impl AsRef<Path>, model: &BitPredictor) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    fs::write(path, to_json(model)).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BitPredictor, ModelFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(path, &text)
}

/// File name of the model for one frame type inside a model directory.
pub fn model_file_name(frame_type: FrameType) -> String {
    format!("model_{frame_type}.json")
}
