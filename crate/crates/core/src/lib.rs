//! Frame-level bit prediction from block-DCT complexity features, and a
//! two-pass rate-control loop driven by those predictions.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! parallel drivers live in the `framebits` companion crate.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod complexity;
pub mod dataset;
pub mod gop;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod plane;
pub mod ratecontrol;
pub mod rng;
pub mod synthetic;

pub use complexity::{ComplexityConfig, ComplexityRecord, FrequencyWeight};
pub use dataset::{FrameCodingRecord, FrameType};
pub use gop::{FrameRole, GopConfig};
pub use plane::{FramePlanes, FrameSource, Plane, VideoGeometry};
