use std::fs;
use std::io::Write;
use std::path::Path;

use super::Yuv420Frame;
use crate::error::{NvcError, Result};

pub fn yuv420_frame_bytes(width: usize, height: usize) -> usize {
    let (cw, ch) = Yuv420Frame::chroma_dims(width, height);
    width * height + 2 * cw * ch
}

/// Reads `nframes` 8-bit I420 frames from a raw `.yuv` file.
pub fn load_yuv420(path: &Path, width: usize, height: usize, nframes: usize) -> Result<Vec<Yuv420Frame>> {
    if width == 0 || height == 0 {
        return Err(NvcError::Argument(format!("invalid dimensions {width}x{height}")));
    }
    let bytes = fs::read(path).map_err(|e| NvcError::io(path.display(), e))?;
    let frame_bytes = yuv420_frame_bytes(width, height);
    let expected = frame_bytes * nframes;
    if bytes.len() < expected {
        return Err(NvcError::Io(format!(
            "{}: expected at least {expected} bytes for {nframes} frames of {width}x{height} I420, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let (cw, ch) = Yuv420Frame::chroma_dims(width, height);
    Ok(bytes
        .chunks_exact(frame_bytes)
        .take(nframes)
        .map(|chunk| {
            let (y, rest) = chunk.split_at(width * height);
            let (u, v) = rest.split_at(cw * ch);
            Yuv420Frame { width, height, y: y.to_vec(), u: u.to_vec(), v: v.to_vec() }
        })
        .collect())
}

/// Number of whole frames a raw I420 file holds.
pub fn count_yuv420_frames(path: &Path, width: usize, height: usize) -> Result<usize> {
    let len = fs::metadata(path).map_err(|e| NvcError::io(path.display(), e))?.len() as usize;
    Ok(len / yuv420_frame_bytes(width, height))
}

pub fn write_yuv420(path: &Path, frames: &[Yuv420Frame]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| NvcError::io(path.display(), e))?;
    for f in frames {
        file.write_all(&f.y)?;
        file.write_all(&f.u)?;
        file.write_all(&f.v)?;
    }
    Ok(())
}
