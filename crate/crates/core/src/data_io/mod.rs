//! Frames, raw video I/O, colour conversion, cropping and synthetic clips.

mod color;
mod dataset;
mod synth;
mod yuv;

pub use color::{rgb_to_yuv420, rgb_to_yuv444, yuv420_to_rgb, yuv444_to_rgb};
pub use dataset::{load_image, load_image_folder, random_crop, ClipSource, Dataset};
pub use synth::{synth_clip, SynthRecipe, SyntheticClip, Texture};
pub use yuv::{count_yuv420_frames, load_yuv420, write_yuv420, yuv420_frame_bytes};

use candle_core::{DType, Device, Tensor};

use crate::error::{NvcError, Result};

/// Spatial alignment the codec needs; inputs are padded up to it.
pub const FRAME_ALIGN: usize = 64;

/// Planar RGB frame in the working colour space, values nominally in [0, 1],
/// stored channel-major (`c * h * w + y * w + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != Self::CHANNELS * width * height {
            return Err(NvcError::Argument(format!(
                "frame {width}x{height} needs {} samples, got {}",
                Self::CHANNELS * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self { width, height, data: vec![value; Self::CHANNELS * width * height] }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// `(1, 3, h, w)` tensor.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (1, Self::CHANNELS, self.height, self.width), device)?;
        Ok(t.to_dtype(dtype)?)
    }

    /// Inverse of [`Frame::to_tensor`]; accepts `(1, 3, h, w)` or `(3, h, w)`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = if t.rank() == 4 { t.squeeze(0)? } else { t.clone() };
        let (c, h, w) = t.dims3()?;
        if c != Self::CHANNELS {
            return Err(NvcError::Argument(format!("expected 3 channels, got {c}")));
        }
        let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        Self::new(w, h, data)
    }

    /// Pads right/bottom to multiples of `align` by edge replication.
    pub fn pad_to_multiple(&self, align: usize) -> Frame {
        let w = self.width.div_ceil(align) * align;
        let h = self.height.div_ceil(align) * align;
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut out = Frame::filled(w, h, 0.0);
        for c in 0..Self::CHANNELS {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.at(c, y.min(self.height - 1), x.min(self.width - 1)));
                }
            }
        }
        out
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Frame> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(NvcError::Argument(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut out = Frame::filled(width, height, 0.0);
        for c in 0..Self::CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    out.set(c, y, x, self.at(c, y0 + y, x0 + x));
                }
            }
        }
        Ok(out)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// 8-bit planar I420 frame: full-resolution luma, chroma at
/// `ceil(w/2) x ceil(h/2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Yuv420Frame {
    pub width: usize,
    pub height: usize,
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

impl Yuv420Frame {
    pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(2), height.div_ceil(2))
    }

    pub fn filled(width: usize, height: usize, y: u8, u: u8, v: u8) -> Self {
        let (cw, ch) = Self::chroma_dims(width, height);
        Self { width, height, y: vec![y; width * height], u: vec![u; cw * ch], v: vec![v; cw * ch] }
    }
}

/// Per-pixel ground-truth or estimated displacement in pixels, with
/// `cur(x, y) ≈ ref(x + dx, y + dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl MotionField {
    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Self { width, height, dx: vec![dx; width * height], dy: vec![dy; width * height] }
    }

    /// `(1, 2, h, w)` tensor with channel 0 = dx, channel 1 = dy.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let mut data = self.dx.clone();
        data.extend_from_slice(&self.dy);
        Ok(Tensor::from_vec(data, (1, 2, self.height, self.width), device)?.to_dtype(dtype)?)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = if t.rank() == 4 { t.squeeze(0)? } else { t.clone() };
        let (c, h, w) = t.dims3()?;
        if c != 2 {
            return Err(NvcError::Argument(format!("flow needs 2 channels, got {c}")));
        }
        let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let (dx, dy) = data.split_at(w * h);
        Ok(Self { width: w, height: h, dx: dx.to_vec(), dy: dy.to_vec() })
    }
}
