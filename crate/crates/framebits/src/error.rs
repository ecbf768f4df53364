use std::path::{Path, PathBuf};

use framebits_core::complexity::{AnalyzeError, ComplexityError};
use framebits_core::dataset::DatasetError;
use framebits_core::gop::GopError;
use framebits_core::metrics::MetricsError;
use framebits_core::models::ModelError;
use framebits_core::plane::GeometryError;
use framebits_core::ratecontrol::RcError;
use thiserror::Error;

use crate::logs::LogError;
use crate::model_file::ModelFileError;
use crate::yuv::YuvError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Yuv(#[from] YuvError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gop(#[from] GopError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    RateControl(#[from] RcError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Gop(_) | Error::Geometry(_) => exit::USAGE,
            Error::Complexity(ComplexityError::UnsupportedGap(_) | ComplexityError::InvalidBlockSize(_)) => exit::USAGE,
            Error::Yuv(YuvError::InvalidGeometry(_)) => exit::USAGE,
            Error::Yuv(YuvError::TruncatedFile { .. }) => exit::DATA,
            Error::Log(e) if e.is_data_error() => exit::DATA,
            Error::ModelFile(ModelFileError::CorruptFile { .. } | ModelFileError::VersionMismatch { .. }) => {
                exit::DATA
            }
            Error::Dataset(_) | Error::Metrics(_) => exit::DATA,
            Error::Model(_) => exit::DATA,
            Error::RateControl(RcError::InvalidConstants(_)) => exit::USAGE,
            Error::RateControl(RcError::Dataset(_) | RcError::BackendMismatch(_) | RcError::ReplayMiss { .. }) => {
                exit::DATA
            }
            _ => exit::RUNTIME,
        }
    }
}

impl From<AnalyzeError<YuvError>> for Error {
    fn from(e: AnalyzeError<YuvError>) -> Self {
        match e {
            AnalyzeError::Source(e) => Error::Yuv(e),
            AnalyzeError::Complexity(e) => Error::Complexity(e),
        }
    }
}

impl From<AnalyzeError<std::convert::Infallible>> for Error {
    fn from(e: AnalyzeError<std::convert::Infallible>) -> Self {
        match e {
            AnalyzeError::Source(e) => match e {},
            AnalyzeError::Complexity(e) => Error::Complexity(e),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
