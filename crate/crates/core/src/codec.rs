//! Whole-sequence coding: padding, the I/P frame loop and container assembly.

use candle_core::Tensor;

use crate::bitstream::{Container, FrameRecord, FrameType, Header};
use crate::data_io::{Frame, FRAME_ALIGN};
use crate::error::{NvcError, Result};
use crate::frame_codec::{DecodedState, VideoModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub q_idx: usize,
    pub intra_period: i16,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self { q_idx: 42, intra_period: -1 }
    }
}

/// Per-frame cost of one coded frame; `bpp_*` use the original frame size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub frame_type: FrameType,
    pub mv_bytes: usize,
    pub ctx_bytes: usize,
    pub bpp_mv: f64,
    pub bpp_context: f64,
    /// Modelled cost of the same symbols, for comparison with the coded size.
    pub estimated_bits: f64,
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub container: Container,
    /// Encoder-side reconstructions cropped to the original size.
    pub recon: Vec<Frame>,
    pub stats: Vec<FrameStats>,
}

impl EncodedSequence {
    pub fn bpp(&self) -> Result<f64> {
        let h = &self.container.header;
        let bytes = self.container.to_bytes()?.len();
        Ok(bytes as f64 * 8.0 / (f64::from(h.width) * f64::from(h.height) * f64::from(h.frame_count)))
    }
}

fn padded(dim: usize) -> usize {
    dim.div_ceil(FRAME_ALIGN) * FRAME_ALIGN
}

fn to_frame(x: &Tensor, width: usize, height: usize) -> Result<Frame> {
    Frame::from_tensor(x)?.crop(0, 0, width, height)
}

pub fn encode_sequence(model: &VideoModel, frames: &[Frame], opts: EncodeOptions) -> Result<EncodedSequence> {
    let first = frames.first().ok_or_else(|| NvcError::Argument("no frames to encode".into()))?;
    let (w, h) = (first.width, first.height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(NvcError::Argument("all frames must share one size".into()));
    }
    if opts.q_idx >= model.rate_config().n {
        return Err(NvcError::Argument(format!("q_idx {} is outside 0..={}", opts.q_idx, model.rate_config().n - 1)));
    }
    let to16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| NvcError::Argument(format!("{what} {v} does not fit the container")))
    };
    let header = Header {
        width: to16(w, "width")?,
        height: to16(h, "height")?,
        frame_count: to16(frames.len(), "frame count")?,
        intra_period: opts.intra_period,
        q_idx: u8::try_from(opts.q_idx).map_err(|_| NvcError::Argument("q_idx exceeds 255".into()))?,
    };
    header.validate().map_err(|e| NvcError::Argument(e.to_string()))?;
    let pixels = (w * h) as f64;
    let mut state: Option<DecodedState> = None;
    let mut records = Vec::with_capacity(frames.len());
    let mut recon = Vec::with_capacity(frames.len());
    let mut stats = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let x = frame.pad_to_multiple(FRAME_ALIGN).to_tensor(model.device(), model.dtype())?;
        let (record, x_hat, next, est) = match (&state, header.is_intra(t)) {
            (Some(s), false) => {
                let c = model.encode_inter(&x, s, opts.q_idx)?;
                let rec = FrameRecord { frame_type: FrameType::P, mv: c.mv_bytes, ctx: c.ctx_bytes };
                (rec, c.x_hat, c.state, c.mv.bits + c.ctx.bits)
            }
            _ => {
                let c = model.encode_intra(&x, opts.q_idx)?;
                let rec = FrameRecord { frame_type: FrameType::I, mv: Vec::new(), ctx: c.bytes };
                (rec, c.x_hat, c.state, c.latent.bits)
            }
        };
        stats.push(FrameStats {
            frame_type: record.frame_type,
            mv_bytes: record.mv.len(),
            ctx_bytes: record.ctx.len(),
            bpp_mv: record.mv.len() as f64 * 8.0 / pixels,
            bpp_context: record.ctx.len() as f64 * 8.0 / pixels,
            estimated_bits: est,
        });
        recon.push(to_frame(&x_hat, w, h)?);
        records.push(record);
        state = Some(next);
    }
    Ok(EncodedSequence { container: Container { header, frames: records }, recon, stats })
}

/// Reconstructs every frame from the container alone.
pub fn decode_sequence(model: &VideoModel, container: &Container) -> Result<Vec<Frame>> {
    let h = &container.header;
    let (w, ht) = (usize::from(h.width), usize::from(h.height));
    let q_idx = usize::from(h.q_idx);
    if q_idx >= model.rate_config().n {
        return Err(NvcError::Bitstream(format!("q_idx {q_idx} is outside the model's rate range")));
    }
    if container.frames.len() != usize::from(h.frame_count) {
        return Err(NvcError::Bitstream("record count differs from the header".into()));
    }
    let mut state: Option<DecodedState> = None;
    let mut out = Vec::with_capacity(container.frames.len());
    for (t, rec) in container.frames.iter().enumerate() {
        let wrap = |e: NvcError| match e {
            NvcError::Bitstream(m) => NvcError::Bitstream(format!("record {t}: {m}")),
            other => other,
        };
        let (x_hat, next) = match (rec.frame_type, &state) {
            (FrameType::I, _) => model.decode_intra(&rec.ctx, padded(ht), padded(w), q_idx).map_err(wrap)?,
            (FrameType::P, Some(s)) => model.decode_inter(&rec.mv, &rec.ctx, s, q_idx).map_err(wrap)?,
            (FrameType::P, None) => {
                return Err(NvcError::Bitstream(format!("record {t}: P-frame before any I-frame")));
            }
        };
        out.push(to_frame(&x_hat, w, ht)?);
        state = Some(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::data_io::{synth_clip, SynthRecipe};
    use crate::rate_control::SamplerConfig;
    use candle_core::{DType, Device};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> VideoModel {
        VideoModel::new(&ModelConfig::desk(), &SamplerConfig::default(), 0, DType::F32, &Device::Cpu).unwrap()
    }

    fn clip(n: usize, w: usize, h: usize) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        synth_clip(SynthRecipe::Translation { vx: 1.0, vy: 0.0 }, n, w, h, &mut rng).unwrap().frames
    }

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let m = model();
        let frames = clip(3, 70, 40);
        let enc = encode_sequence(&m, &frames, EncodeOptions::default()).unwrap();
        assert_eq!(enc.container.frames.len(), 3);
        assert_eq!(enc.container.frames[0].frame_type, FrameType::I);
        assert!(enc.recon.iter().all(|f| (f.width, f.height) == (70, 40)));
        let bytes = enc.container.to_bytes().unwrap();
        let dec = decode_sequence(&m, &Container::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(dec, enc.recon);
        assert!(enc.bpp().unwrap() > 0.0);
    }

    #[test]
    fn intra_period_inserts_i_frames() {
        let m = model();
        let enc = encode_sequence(&m, &clip(4, 64, 64), EncodeOptions { q_idx: 0, intra_period: 2 }).unwrap();
        let types: Vec<FrameType> = enc.container.frames.iter().map(|f| f.frame_type).collect();
        assert_eq!(types, [FrameType::I, FrameType::P, FrameType::I, FrameType::P]);
        assert_eq!(decode_sequence(&m, &enc.container).unwrap(), enc.recon);
    }

    #[test]
    fn bad_options_are_argument_errors() {
        let m = model();
        let frames = clip(2, 64, 64);
        for opts in [EncodeOptions { q_idx: 64, intra_period: -1 }, EncodeOptions { q_idx: 1, intra_period: 0 }] {
            assert!(matches!(encode_sequence(&m, &frames, opts), Err(NvcError::Argument(_))));
        }
        assert!(encode_sequence(&m, &[], EncodeOptions::default()).is_err());
    }
}
