//! Hierarchical random-access GOP structure.
//!
//! Frame `k` is intra when `k % intra_period == 0`, a forward-predicted anchor
//! when `k % gop_size == 0`, and bi-predicted otherwise. B-frames are placed by
//! binary midpoint splitting of the span between two anchors: the midpoint
//! `m` of `[a, b]` references `(a, b)` and sits one level deeper than the
//! span's parent.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::dataset::FrameType;

pub const MAX_QP: i32 = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GopError {
    #[error("gop_size must be one of 2, 4, 8, 16, 32 (got {0})")]
    GopSize(usize),
    #[error("intra_period {intra_period} must be a positive multiple of gop_size {gop_size}")]
    IntraPeriod { gop_size: usize, intra_period: usize },
    #[error("frame_count must be at least 1")]
    NoFrames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GopConfig {
    pub gop_size: usize,
    pub intra_period: usize,
}

impl Default for GopConfig {
    fn default() -> Self {
        Self {
            gop_size: 32,
            intra_period: 64,
        }
    }
}

impl GopConfig {
    pub fn new(gop_size: usize, intra_period: usize) -> Result<Self, GopError> {
        let cfg = Self {
            gop_size,
            intra_period,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GopError> {
        if ![2, 4, 8, 16, 32].contains(&self.gop_size) {
            return Err(GopError::GopSize(self.gop_size));
        }
        if self.intra_period == 0 || self.intra_period % self.gop_size != 0 {
            return Err(GopError::IntraPeriod {
                gop_size: self.gop_size,
                intra_period: self.intra_period,
            });
        }
        Ok(())
    }

    /// Index of the GOP that owns frame `k`; frame 0 opens GOP 0 and GOP
    /// `g > 0` covers `((g-1)·gop_size, g·gop_size]`.
    pub fn gop_index(&self, k: usize) -> usize {
        k.div_ceil(self.gop_size)
    }
}

/// Coding role of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRole {
    pub frame_index: usize,
    pub frame_type: FrameType,
    /// Past reference first for B-frames.
    pub refs: Vec<usize>,
    pub level: u32,
    pub gop_index: usize,
}

impl FrameRole {
    /// Distances `|frame_index - ref|`, in `refs` order.
    pub fn ref_distances(&self) -> impl Iterator<Item = usize> + '_ {
        self.refs.iter().map(move |&r| self.frame_index.abs_diff(r))
    }
}

impl fmt::Display for FrameRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.frame_type, self.frame_index)
    }
}

fn split_span(roles: &mut [Option<FrameRole>], a: usize, b: usize, level: u32, gop_index: usize) {
    if b <= a + 1 {
        return;
    }
    let m = a + (b - a) / 2;
    roles[m] = Some(FrameRole {
        frame_index: m,
        frame_type: FrameType::B,
        refs: vec![a, b],
        level,
        gop_index,
    });
    split_span(roles, a, m, level + 1, gop_index);
    split_span(roles, m, b, level + 1, gop_index);
}

/// Assigns type, references and hierarchy level to frames `0..frame_count`.
///
/// A trailing partial GOP is coded as a truncated hierarchy: the last frame
/// becomes the forward-predicted anchor of the remaining span, and odd spans
/// split with the midpoint rounded down.
pub fn classify_frames(frame_count: usize, cfg: &GopConfig) -> Result<Vec<FrameRole>, GopError> {
    cfg.validate()?;
    if frame_count == 0 {
        return Err(GopError::NoFrames);
    }
    let gop = cfg.gop_size;
    let mut roles: Vec<Option<FrameRole>> = vec![None; frame_count];
    let mut anchor = 0usize;
    loop {
        let gop_index = cfg.gop_index(anchor);
        roles[anchor] = Some(if anchor % cfg.intra_period == 0 {
            FrameRole {
                frame_index: anchor,
                frame_type: FrameType::I,
                refs: Vec::new(),
                level: 0,
                gop_index,
            }
        } else {
            let prev = if anchor % gop == 0 {
                anchor - gop
            } else {
                // tail anchor: references the last full anchor
                anchor - anchor % gop
            };
            FrameRole {
                frame_index: anchor,
                frame_type: FrameType::P,
                refs: vec![prev],
                level: 0,
                gop_index,
            }
        });
        if anchor == frame_count - 1 {
            break;
        }
        let span_start = anchor - anchor % gop;
        let next = (span_start + gop).min(frame_count - 1);
        anchor = next;
    }
    // B-frames between consecutive anchors.
    let anchors: Vec<usize> = roles
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|_| i))
        .collect();
    for pair in anchors.windows(2) {
        let gop_index = cfg.gop_index(pair[1]);
        split_span(&mut roles, pair[0], pair[1], 1, gop_index);
    }
    Ok(roles
        .into_iter()
        .map(|r| r.expect("every frame receives a role"))
        .collect())
}

/// Coding order: a topological order in which references precede dependents,
/// tie-broken by (GOP, level, frame index).
pub fn decode_order(roles: &[FrameRole]) -> Vec<usize> {
    let n = roles.len();
    let mut pending: Vec<usize> = roles.iter().map(|r| r.refs.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in roles {
        for &p in &r.refs {
            dependents[p].push(r.frame_index);
        }
    }
    let key = |i: usize| (roles[i].gop_index, roles[i].level, i);
    let mut ready: BTreeSet<(usize, u32, usize)> = (0..n)
        .filter(|&i| pending[i] == 0)
        .map(key)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        let i = next.2;
        order.push(i);
        for &d in &dependents[i] {
            pending[d] -= 1;
            if pending[d] == 0 {
                ready.insert(key(d));
            }
        }
    }
    order
}

/// First-pass QP per frame: `base_qp + offsets[level]`, clamped to `[0, 63]`.
/// Levels beyond the offset table reuse its last entry.
pub fn cascade_qps(roles: &[FrameRole], base_qp: i32, level_offsets: &[i32]) -> Vec<i32> {
    roles
        .iter()
        .map(|r| {
            let off = level_offsets
                .get(r.level as usize)
                .or(level_offsets.last())
                .copied()
                .unwrap_or(0);
            (base_qp + off).clamp(0, MAX_QP)
        })
        .collect()
}

pub const DEFAULT_LEVEL_OFFSETS: [i32; 6] = [0, 1, 2, 3, 4, 5];
