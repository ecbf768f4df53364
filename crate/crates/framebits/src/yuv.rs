//! Raw planar YUV 4:2:0 files: frames stored back to back, Y then U then V,
//! row-major, no padding and no header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use framebits_core::plane::GeometryError;
use framebits_core::{FramePlanes, FrameSource, Plane, VideoGeometry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum YuvError {
    #[error("{0}: no such file")]
    FileNotFound(PathBuf),
    #[error("{path}: size {size} is not a multiple of the {frame_size}-byte frame")]
    TruncatedFile {
        path: PathBuf,
        size: u64,
        frame_size: usize,
    },
    #[error(transparent)]
    InvalidGeometry(#[from] GeometryError),
    #[error("frame {index} out of range (sequence has {count} frames)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Random-access handle on a YUV file. Reads are positional, so one handle
/// can serve several threads.
#[derive(Debug)]
pub struct YuvFile {
    path: PathBuf,
    file: File,
    geometry: VideoGeometry,
}

/// Opens `path` as 8-bit 4:2:0 video of the given size.
pub fn open_sequence(path: impl AsRef<Path>, width: usize, height: usize) -> Result<YuvFile, YuvError> {
    open_sequence_with(path, VideoGeometry::new(width, height, 8)?)
}

/// Like [`open_sequence`] with explicit geometry; `frame_count` is replaced
/// by the count derived from the file size.
pub fn open_sequence_with(path: impl AsRef<Path>, geometry: VideoGeometry) -> Result<YuvFile, YuvError> {
    let path = path.as_ref().to_path_buf();
    VideoGeometry::new(geometry.width, geometry.height, geometry.bit_depth)?;
    let file = File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => YuvError::FileNotFound(path.clone()),
        _ => YuvError::Io {
            path: path.clone(),
            source: e,
        },
    })?;
    let size = file
        .metadata()
        .map_err(|e| YuvError::Io {
            path: path.clone(),
            source: e,
        })?
        .len();
    let frame_size = geometry.frame_size();
    if size % frame_size as u64 != 0 {
        return Err(YuvError::TruncatedFile {
            path,
            size,
            frame_size,
        });
    }
    let geometry = geometry.with_frame_count((size / frame_size as u64) as usize);
    Ok(YuvFile {
        path,
        file,
        geometry,
    })
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

impl YuvFile {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Frames in order.
    pub fn frames(&self) -> impl Iterator<Item = Result<FramePlanes, YuvError>> + '_ {
        (0..self.geometry.frame_count).map(move |k| self.read_frame(k))
    }
}

impl FrameSource for YuvFile {
    type Error = YuvError;

    fn geometry(&self) -> VideoGeometry {
        self.geometry
    }

    fn read_frame(&self, index: usize) -> Result<FramePlanes, YuvError> {
        let g = &self.geometry;
        if index >= g.frame_count {
            return Err(YuvError::IndexOutOfRange {
                index,
                count: g.frame_count,
            });
        }
        let mut buf = vec![0u8; g.frame_size()];
        read_at(&self.file, &mut buf, (index * g.frame_size()) as u64).map_err(|e| YuvError::Io {
            path: self.path.clone(),
            source: e,
        })?;
        let chroma = buf.split_off(g.luma_size());
        let (u, v) = chroma.split_at(g.chroma_size());
        Ok(FramePlanes::new(
            index,
            Plane::new(g.width, g.height, buf),
            Plane::new(g.chroma_width(), g.chroma_height(), u.to_vec()),
            Plane::new(g.chroma_width(), g.chroma_height(), v.to_vec()),
        ))
    }
}

/// Sequential writer for the same layout.
pub struct YuvWriter {
    path: PathBuf,
    out: BufWriter<File>,
    geometry: VideoGeometry,
    written: usize,
}

impl YuvWriter {
    pub fn create(path: impl AsRef<Path>, geometry: VideoGeometry) -> Result<Self, YuvError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| YuvError::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
            geometry,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &FramePlanes) -> Result<(), YuvError> {
        frame.check_geometry(&self.geometry)?;
        for p in frame.planes() {
            self.out.write_all(p.data()).map_err(|e| YuvError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        }
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the number of frames written.
    pub fn finish(mut self) -> Result<usize, YuvError> {
        self.out.flush().map_err(|e| YuvError::Io {
            path: self.path.clone(),
            source: e,
        })?;
        Ok(self.written)
    }
}

/// Renders every frame of `source` into a file.
pub fn write_sequence<S: FrameSource>(path: impl AsRef<Path>, source: &S) -> Result<usize, YuvError>
where
    S::Error: Into<YuvError>,
{
    let mut w = YuvWriter::create(path, source.geometry())?;
    for k in 0..source.frame_count() {
        let f = source.read_frame(k).map_err(Into::into)?;
        w.write_frame(&f)?;
    }
    w.finish()
}

impl From<std::convert::Infallible> for YuvError {
    fn from(e: std::convert::Infallible) -> Self {
        match e {}
    }
}
