//! Declarative run configuration (TOML). Unknown keys are rejected; every
//! command writes the resolved document next to its outputs.

use std::fs;
use std::path::Path;

use framebits_core::complexity::{ComplexityConfig, FrequencyWeight, SUPPORTED_GAPS};
use framebits_core::dataset::SyntheticOracleParams;
use framebits_core::gop::{GopConfig, DEFAULT_LEVEL_OFFSETS};
use framebits_core::models::ForestParams;
use framebits_core::ratecontrol::{c_high_for_height, CompensationMode, RcConstants, DEFAULT_C_LOW, DEFAULT_Q_START};
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const RESOLVED_CONFIG_NAME: &str = "run_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub video: VideoSection,
    pub analysis: AnalysisSection,
    pub gop: GopConfig,
    pub dataset: DatasetSection,
    pub oracle: SyntheticOracleParams,
    pub forest: ForestParams,
    pub training: TrainingSection,
    pub rc: RcSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSection {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub frame_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub block_size: usize,
    pub gaps: Vec<u32>,
    pub weight: FrequencyWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub qp_min: i32,
    pub qp_max: i32,
    pub qp_step: i32,
    pub level_offsets: Vec<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    #[default]
    Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub model: ModelKind,
    pub folds: usize,
    pub use_chroma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcSection {
    pub c_low: f64,
    /// Derived from the video height when absent.
    pub c_high: Option<f64>,
    pub q_start: i32,
    pub strength: f64,
    pub compensation: CompensationMode,
    /// Bits per second.
    pub target_bitrate: Option<f64>,
    /// Fixed first-pass base QP; searched from the target when absent.
    pub first_pass_qp: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub sequences: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            video: VideoSection::default(),
            analysis: AnalysisSection::default(),
            gop: GopConfig::default(),
            dataset: DatasetSection::default(),
            oracle: SyntheticOracleParams::default(),
            forest: ForestParams::default(),
            training: TrainingSection::default(),
            rc: RcSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for VideoSection {
    fn default() -> Self {
        Self {
            width: None,
            height: None,
            frame_rate: 30.0,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let c = ComplexityConfig::default();
        Self {
            block_size: c.block_size,
            gaps: SUPPORTED_GAPS.to_vec(),
            weight: c.weight,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            qp_min: 20,
            qp_max: 50,
            qp_step: 5,
            level_offsets: DEFAULT_LEVEL_OFFSETS.to_vec(),
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Forest,
            folds: 5,
            use_chroma: true,
        }
    }
}

impl Default for RcSection {
    fn default() -> Self {
        Self {
            c_low: DEFAULT_C_LOW,
            c_high: None,
            q_start: DEFAULT_Q_START,
            strength: 1.0,
            compensation: CompensationMode::Gop,
            target_bitrate: None,
            first_pass_qp: None,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            sequences: 50,
            frames: 33,
            width: 128,
            height: 96,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: impl AsRef<Path>) -> Result<(), Error> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_NAME);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }

    pub fn complexity(&self) -> ComplexityConfig {
        ComplexityConfig {
            block_size: self.analysis.block_size,
            gaps: self.analysis.gaps.clone(),
            weight: self.analysis.weight,
        }
    }

    pub fn rc_constants(&self, height: usize) -> RcConstants {
        RcConstants {
            c_low: self.rc.c_low,
            c_high: self.rc.c_high.unwrap_or_else(|| c_high_for_height(height)),
            q_start: self.rc.q_start,
        }
    }
}
