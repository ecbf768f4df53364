//! Sample planes and sequence geometry for 8-bit planar YUV 4:2:0.

use alloc::vec;
use alloc::vec::Vec;
use core::convert::Infallible;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("invalid geometry {width}x{height}: dimensions must be positive and even")]
    InvalidGeometry { width: usize, height: usize },
    #[error("unsupported bit depth {0}; only 8-bit input is accepted")]
    UnsupportedBitDepth(u8),
    #[error("plane is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    PlaneSize {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Luma dimensions, sample depth and frame count of a raw sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoGeometry {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    /// Informational only.
    pub frame_rate: f64,
    pub frame_count: usize,
}

impl VideoGeometry {
    pub fn new(width: usize, height: usize, bit_depth: u8) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(GeometryError::InvalidGeometry { width, height });
        }
        if bit_depth != 8 {
            return Err(GeometryError::UnsupportedBitDepth(bit_depth));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            frame_rate: 30.0,
            frame_count: 0,
        })
    }

    pub fn with_frame_rate(mut self, frame_rate: f64) -> Self {
        self.frame_rate = frame_rate;
        self
    }

    pub fn with_frame_count(mut self, frame_count: usize) -> Self {
        self.frame_count = frame_count;
        self
    }

    pub fn chroma_width(&self) -> usize {
        self.width / 2
    }

    pub fn chroma_height(&self) -> usize {
        self.height / 2
    }

    pub fn luma_size(&self) -> usize {
        self.width * self.height
    }

    pub fn chroma_size(&self) -> usize {
        self.chroma_width() * self.chroma_height()
    }

    /// Bytes per frame: `width * height * 3 / 2` for 8-bit 4:2:0.
    pub fn frame_size(&self) -> usize {
        self.luma_size() + 2 * self.chroma_size()
    }
}

/// A row-major plane of 8-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }
}

/// The three decoded planes of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePlanes {
    pub index: usize,
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
}

impl FramePlanes {
    pub fn new(index: usize, y: Plane, u: Plane, v: Plane) -> Self {
        Self { index, y, u, v }
    }

    /// A frame with every plane set to a constant.
    pub fn constant(index: usize, geometry: &VideoGeometry, y: u8, u: u8, v: u8) -> Self {
        Self {
            index,
            y: Plane::filled(geometry.width, geometry.height, y),
            u: Plane::filled(geometry.chroma_width(), geometry.chroma_height(), u),
            v: Plane::filled(geometry.chroma_width(), geometry.chroma_height(), v),
        }
    }

    pub fn check_geometry(&self, geometry: &VideoGeometry) -> Result<(), GeometryError> {
        let expect = [
            (&self.y, geometry.width, geometry.height),
            (&self.u, geometry.chroma_width(), geometry.chroma_height()),
            (&self.v, geometry.chroma_width(), geometry.chroma_height()),
        ];
        for (plane, want_w, want_h) in expect {
            if plane.width() != want_w || plane.height() != want_h {
                return Err(GeometryError::PlaneSize {
                    got_w: plane.width(),
                    got_h: plane.height(),
                    want_w,
                    want_h,
                });
            }
        }
        Ok(())
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.u, &self.v]
    }
}

/// Random-access frame provider.
///
/// Reads take `&self`: implementations must allow concurrent readers.
pub trait FrameSource {
    type Error;

    fn geometry(&self) -> VideoGeometry;

    fn frame_count(&self) -> usize {
        self.geometry().frame_count
    }

    fn read_frame(&self, index: usize) -> Result<FramePlanes, Self::Error>;
}

/// An in-memory sequence of frames sharing one geometry.
#[derive(Debug, Clone)]
pub struct MemorySequence {
    geometry: VideoGeometry,
    frames: Vec<FramePlanes>,
}

impl MemorySequence {
    pub fn new(geometry: VideoGeometry, frames: Vec<FramePlanes>) -> Result<Self, GeometryError> {
        for frame in &frames {
            frame.check_geometry(&geometry)?;
        }
        let geometry = geometry.with_frame_count(frames.len());
        Ok(Self { geometry, frames })
    }

    pub fn frames(&self) -> &[FramePlanes] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FramePlanes> {
        self.frames
    }
}

impl FrameSource for MemorySequence {
    type Error = Infallible;

    fn geometry(&self) -> VideoGeometry {
        self.geometry
    }

    fn read_frame(&self, index: usize) -> Result<FramePlanes, Infallible> {
        let mut frame = self.frames[index].clone();
        frame.index = index;
        Ok(frame)
    }
}
