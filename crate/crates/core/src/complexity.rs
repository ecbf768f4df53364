//! Block-DCT complexity descriptors.
//!
//! Every plane is tiled into `w×w` blocks (edge-replicated at the borders)
//! and each block goes through an orthonormal 2-D DCT-II. Per plane:
//!
//! * texture energy `E` is the mean over blocks of
//!   `Σ_{(i,j)≠(0,0)} ω(i,j)·|C(i,j)| / w²`, with `ω(i,j) = 2^((i+j)/w)` by default;
//! * brightness `L` is the mean over blocks of `|C(0,0)| / w`, i.e. the mean sample value.
//!
//! The temporal gradient `h` between two frames is the mean absolute
//! difference of their luma block energies.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::plane::{FramePlanes, FrameSource, Plane};

/// Temporal gaps the analyzer can produce; reference distances of a
/// hierarchical GOP-32 are exactly this set.
pub const SUPPORTED_GAPS: [u32; 6] = [1, 2, 4, 8, 16, 32];

pub const DEFAULT_BLOCK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexityError {
    #[error("block grids differ: {current} current blocks vs {reference} reference blocks")]
    GridMismatch { current: usize, reference: usize },
    #[error("unsupported temporal gap {0} (allowed: 1, 2, 4, 8, 16, 32)")]
    UnsupportedGap(u32),
    #[error("block size must be at least 2, got {0}")]
    InvalidBlockSize(usize),
}

#[derive(Debug, Error)]
pub enum AnalyzeError<E> {
    #[error("frame source: {0}")]
    Source(E),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
}

/// Frequency weighting applied to AC magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FrequencyWeight {
    /// `2^((i+j)/w)`: emphasizes high frequencies.
    #[default]
    Exp2,
    Flat,
}

impl FrequencyWeight {
    pub fn weight(self, i: usize, j: usize, w: usize) -> f64 {
        match self {
            FrequencyWeight::Exp2 => libm::exp2((i + j) as f64 / w as f64),
            FrequencyWeight::Flat => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexityConfig {
    pub block_size: usize,
    pub gaps: Vec<u32>,
    pub weight: FrequencyWeight,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            gaps: SUPPORTED_GAPS.to_vec(),
            weight: FrequencyWeight::Exp2,
        }
    }
}

impl ComplexityConfig {
    pub fn validate(&self) -> Result<(), ComplexityError> {
        if self.block_size < 2 {
            return Err(ComplexityError::InvalidBlockSize(self.block_size));
        }
        for &g in &self.gaps {
            gap_slot(g)?;
        }
        Ok(())
    }
}

fn gap_slot(gap: u32) -> Result<usize, ComplexityError> {
    SUPPORTED_GAPS
        .iter()
        .position(|&g| g == gap)
        .ok_or(ComplexityError::UnsupportedGap(gap))
}

/// Precomputed orthonormal DCT-II basis and frequency weights for one block size.
#[derive(Debug, Clone)]
pub struct DctPlan {
    size: usize,
    /// `basis[k * w + n] = c_k cos(π (2n + 1) k / 2w)`
    basis: Vec<f64>,
    /// Transposed basis, `basis_t[n * w + k]`.
    basis_t: Vec<f64>,
    weights: Vec<f64>,
}

impl DctPlan {
    pub fn new(size: usize, weight: FrequencyWeight) -> Result<Self, ComplexityError> {
        if size < 2 {
            return Err(ComplexityError::InvalidBlockSize(size));
        }
        let w = size as f64;
        let mut basis = vec![0.0; size * size];
        let mut basis_t = vec![0.0; size * size];
        for k in 0..size {
            let scale = if k == 0 {
                libm::sqrt(1.0 / w)
            } else {
                libm::sqrt(2.0 / w)
            };
            for n in 0..size {
                let c = scale * libm::cos(PI * (2 * n + 1) as f64 * k as f64 / (2.0 * w));
                basis[k * size + n] = c;
                basis_t[n * size + k] = c;
            }
        }
        let mut weights = vec![0.0; size * size];
        for i in 0..size {
            for j in 0..size {
                weights[i * size + j] = weight.weight(i, j, size);
            }
        }
        Ok(Self {
            size,
            basis,
            basis_t,
            weights,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Forward transform of a row-major `w×w` block into `out`.
    ///
    /// The block mean is removed before the separable transform and restored
    /// as the DC term (`w · mean`), so a constant block has AC coefficients
    /// that are exactly zero.
    pub fn forward(&self, block: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        let w = self.size;
        assert_eq!(block.len(), w * w);
        assert_eq!(out.len(), w * w);
        let mean = block.iter().sum::<f64>() / (w * w) as f64;

        scratch.clear();
        scratch.resize(w * w, 0.0);
        // rows: scratch[r][k] = Σ_n basis[k][n] · (x[r][n] − mean)
        for r in 0..w {
            let src = &block[r * w..(r + 1) * w];
            let dst = &mut scratch[r * w..(r + 1) * w];
            for (n, &x) in src.iter().enumerate() {
                let x = x - mean;
                if x == 0.0 {
                    continue;
                }
                let col = &self.basis_t[n * w..(n + 1) * w];
                for (d, &c) in dst.iter_mut().zip(col) {
                    *d += x * c;
                }
            }
        }
        // columns: out[k][l] = Σ_r basis[k][r] · scratch[r][l]
        out.fill(0.0);
        for k in 0..w {
            let dst = &mut out[k * w..(k + 1) * w];
            for r in 0..w {
                let c = self.basis[k * w + r];
                let src = &scratch[r * w..(r + 1) * w];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
        out[0] = w as f64 * mean;
    }

    /// Weighted AC magnitude per block area.
    pub fn ac_energy(&self, coeffs: &[f64]) -> f64 {
        let w = self.size;
        let total: f64 = coeffs
            .iter()
            .zip(&self.weights)
            .skip(1)
            .map(|(c, wt)| wt * c.abs())
            .sum();
        total / (w * w) as f64
    }
}

/// Orthonormal 2-D DCT-II of a row-major `w×w` block.
pub fn block_dct(block: &[f64], size: usize) -> Vec<f64> {
    let plan = DctPlan::new(size, FrequencyWeight::Flat).expect("block size >= 2");
    let mut out = vec![0.0; size * size];
    let mut scratch = Vec::new();
    plan.forward(block, &mut out, &mut scratch);
    out
}

/// Per-block intermediate behind `E` and `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTexture {
    pub origin: (usize, usize),
    /// Weighted AC magnitude per block area.
    pub energy: f64,
    /// `|DC| / w`, the block mean.
    pub dc: f64,
}

/// Plane-level descriptors plus the block energies kept for `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTexture {
    pub energy: f64,
    pub brightness: f64,
    pub block_energies: Vec<f64>,
}

fn load_block(plane: &Plane, row0: usize, col0: usize, w: usize, buf: &mut [f64]) {
    let max_r = plane.height() - 1;
    let max_c = plane.width() - 1;
    for r in 0..w {
        let src = plane.row((row0 + r).min(max_r));
        let dst = &mut buf[r * w..(r + 1) * w];
        if col0 + w <= plane.width() {
            for (d, &s) in dst.iter_mut().zip(&src[col0..col0 + w]) {
                *d = f64::from(s);
            }
        } else {
            for (c, d) in dst.iter_mut().enumerate() {
                *d = f64::from(src[(col0 + c).min(max_c)]);
            }
        }
    }
}

/// Per-block textures of a plane in raster order.
pub fn block_textures(plane: &Plane, plan: &DctPlan) -> Vec<BlockTexture> {
    let w = plan.size();
    let rows = plane.height().div_ceil(w);
    let cols = plane.width().div_ceil(w);
    let mut out = Vec::with_capacity(rows * cols);
    let mut block = vec![0.0; w * w];
    let mut coeffs = vec![0.0; w * w];
    let mut scratch = Vec::with_capacity(w * w);
    for br in 0..rows {
        for bc in 0..cols {
            let origin = (br * w, bc * w);
            load_block(plane, origin.0, origin.1, w, &mut block);
            plan.forward(&block, &mut coeffs, &mut scratch);
            out.push(BlockTexture {
                origin,
                energy: plan.ac_energy(&coeffs),
                dc: coeffs[0].abs() / w as f64,
            });
        }
    }
    out
}

/// `E` and `L` of one plane.
pub fn frame_texture(plane: &Plane, plan: &DctPlan) -> PlaneTexture {
    let blocks = block_textures(plane, plan);
    let n = blocks.len() as f64;
    let energy = blocks.iter().map(|b| b.energy).sum::<f64>() / n;
    let brightness = blocks.iter().map(|b| b.dc).sum::<f64>() / n;
    PlaneTexture {
        energy,
        brightness,
        block_energies: blocks.into_iter().map(|b| b.energy).collect(),
    }
}

/// Mean absolute difference of block energies.
pub fn temporal_gradient(current: &[f64], reference: &[f64]) -> Result<f64, ComplexityError> {
    if current.len() != reference.len() || current.is_empty() {
        return Err(ComplexityError::GridMismatch {
            current: current.len(),
            reference: reference.len(),
        });
    }
    let sum: f64 = current
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / current.len() as f64)
}

/// Spatial analysis of one frame; the temporal pass runs later over these.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnalysis {
    pub index: usize,
    pub luma: PlaneTexture,
    pub e_u: f64,
    pub l_u: f64,
    pub e_v: f64,
    pub l_v: f64,
}

pub fn analyze_frame(frame: &FramePlanes, plan: &DctPlan) -> FrameAnalysis {
    let luma = frame_texture(&frame.y, plan);
    let u = frame_texture(&frame.u, plan);
    let v = frame_texture(&frame.v, plan);
    FrameAnalysis {
        index: frame.index,
        luma,
        e_u: u.energy,
        l_u: u.brightness,
        e_v: v.energy,
        l_v: v.brightness,
    }
}

/// Per-frame feature vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexityRecord {
    pub frame_index: usize,
    pub e_y: f64,
    pub l_y: f64,
    pub e_u: f64,
    pub l_u: f64,
    pub e_v: f64,
    pub l_v: f64,
    /// Indexed like [`SUPPORTED_GAPS`]; `None` when not analyzed or `frame_index < gap`.
    pub h_by_gap: [Option<f64>; 6],
}

impl ComplexityRecord {
    pub fn new(frame_index: usize) -> Self {
        Self {
            frame_index,
            e_y: 0.0,
            l_y: 0.0,
            e_u: 0.0,
            l_u: 0.0,
            e_v: 0.0,
            l_v: 0.0,
            h_by_gap: [None; 6],
        }
    }

    pub fn h(&self, gap: u32) -> Option<f64> {
        gap_slot(gap).ok().and_then(|s| self.h_by_gap[s])
    }

    pub fn set_h(&mut self, gap: u32, value: Option<f64>) -> Result<(), ComplexityError> {
        self.h_by_gap[gap_slot(gap)?] = value;
        Ok(())
    }

    /// Gaps for which `h` is defined, ascending.
    pub fn available_gaps(&self) -> impl Iterator<Item = u32> + '_ {
        SUPPORTED_GAPS
            .iter()
            .zip(&self.h_by_gap)
            .filter(|(_, h)| h.is_some())
            .map(|(&g, _)| g)
    }
}

/// Temporal pass: joins spatial analyses (in frame order) into records.
pub fn assemble_records(
    analyses: &[FrameAnalysis],
    gaps: &[u32],
) -> Result<Vec<ComplexityRecord>, ComplexityError> {
    for &g in gaps {
        gap_slot(g)?;
    }
    let mut records = Vec::with_capacity(analyses.len());
    for (k, a) in analyses.iter().enumerate() {
        let mut rec = ComplexityRecord {
            frame_index: a.index,
            e_y: a.luma.energy,
            l_y: a.luma.brightness,
            e_u: a.e_u,
            l_u: a.l_u,
            e_v: a.e_v,
            l_v: a.l_v,
            h_by_gap: [None; 6],
        };
        for &g in gaps {
            let g_usize = g as usize;
            if k >= g_usize {
                let h = temporal_gradient(
                    &a.luma.block_energies,
                    &analyses[k - g_usize].luma.block_energies,
                )?;
                rec.set_h(g, Some(h))?;
            }
        }
        records.push(rec);
    }
    Ok(records)
}

/// Sequential analysis of a whole sequence.
pub fn analyze_sequence<S: FrameSource>(
    source: &S,
    config: &ComplexityConfig,
) -> Result<Vec<ComplexityRecord>, AnalyzeError<S::Error>> {
    config.validate()?;
    let plan = DctPlan::new(config.block_size, config.weight)?;
    let mut analyses = Vec::with_capacity(source.frame_count());
    for index in 0..source.frame_count() {
        let frame = source.read_frame(index).map_err(AnalyzeError::Source)?;
        analyses.push(analyze_frame(&frame, &plan));
    }
    Ok(assemble_records(&analyses, &config.gaps)?)
}
