//! File formats, parallel drivers and the command-line front end for
//! `framebits-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod logs;
pub mod model_file;
pub mod parallel;
pub mod pipeline;
pub mod yuv;

pub use error::{Error, Result};
