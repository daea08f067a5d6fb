//! Motion estimation, warping and the motion-vector codec.

mod warp;

pub use warp::{downscale_flow, upscale_flow, warp};

use candle_core::{Tensor, Var};
use rand_chacha::ChaCha8Rng;

use crate::data_io::{Frame, MotionField};
use crate::entropy_coding::{from_symbols, laplace_bits, quantize, to_symbols, QuantMode, ScaleTable};
use crate::error::{NvcError, Result};
use crate::nn::{leaky_relu, Conv, ParamStore, UpConv};

const PYRAMID_LEVELS: usize = 3;
/// Search radius of the per-level cost volume, in pixels of that level.
const SEARCH_RADIUS: i64 = 2;
const SEARCH_TAPS: usize = ((2 * SEARCH_RADIUS + 1) * (2 * SEARCH_RADIUS + 1)) as usize;
/// Flow is divided by this before entering the motion encoder.
const FLOW_NORM: f64 = 4.0;

/// Coarse-to-fine flow estimator over three pyramid levels (1/4, 1/2, full).
/// Each level matches the current frame against the warped reference over a
/// local cost volume, takes the soft-argmin displacement, and refines it with
/// a five-layer conv stack fed by the frames, the flow and the costs.
#[derive(Debug, Clone)]
pub struct FlowNet {
    levels: Vec<Vec<Conv>>,
    log_temp: Vec<Var>,
    max_displacement: f64,
}

/// `out[y, x] = x[y + dy, x + dx]` with edge replication; `padded` carries
/// `SEARCH_RADIUS` replicated pixels on every side.
fn shifted(padded: &Tensor, h: usize, w: usize, dx: i64, dy: i64) -> Result<Tensor> {
    let r = SEARCH_RADIUS;
    Ok(padded.narrow(2, (r + dy) as usize, h)?.narrow(3, (r + dx) as usize, w)?)
}

/// Separable 3x3 box filter with edge replication.
fn box3(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let p = x.pad_with_same(3, 1, 1)?;
    let row = ((p.narrow(3, 0, w)? + p.narrow(3, 1, w)?)? + p.narrow(3, 2, w)?)?;
    let p = row.pad_with_same(2, 1, 1)?;
    let col = ((p.narrow(2, 0, h)? + p.narrow(2, 1, h)?)? + p.narrow(2, 2, h)?)?;
    Ok(col.affine(1.0 / 9.0, 0.0)?)
}

impl FlowNet {
    pub fn new(store: &mut ParamStore, hidden: usize, max_displacement: f64) -> Result<Self> {
        let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
        let mut log_temp = Vec::with_capacity(PYRAMID_LEVELS);
        let cin = 8 + SEARCH_TAPS;
        for l in 0..PYRAMID_LEVELS {
            let name = |j: usize| format!("flow_net.level{l}.{j}");
            levels.push(vec![
                store.conv(&name(0), cin, hidden, 3, 1, 1.0)?,
                store.conv(&name(1), hidden, hidden, 3, 1, 1.0)?,
                store.conv(&name(2), hidden, hidden, 3, 1, 1.0)?,
                store.conv(&name(3), hidden, hidden, 3, 1, 1.0)?,
                store.conv(&name(4), hidden, 2, 3, 1, 0.01)?,
            ]);
            log_temp.push(store.constant(&format!("flow_net.level{l}.log_temp"), &[1], (2e-4f64).ln())?);
        }
        Ok(Self { levels, log_temp, max_displacement })
    }

    pub fn max_displacement(&self) -> f64 {
        self.max_displacement
    }

    /// Matching cost for every displacement in the search window and the
    /// softmin-weighted displacement, `(B, taps, H, W)` and `(B, 2, H, W)`.
    fn cost_volume(&self, cur: &Tensor, warped: &Tensor, level: usize) -> Result<(Tensor, Tensor)> {
        let (_, _, h, w) = cur.dims4()?;
        let r = SEARCH_RADIUS as usize;
        let padded = warped.pad_with_same(2, r, r)?.pad_with_same(3, r, r)?;
        let mut costs = Vec::with_capacity(SEARCH_TAPS);
        let mut offsets = Vec::with_capacity(2 * SEARCH_TAPS);
        for dy in -SEARCH_RADIUS..=SEARCH_RADIUS {
            for dx in -SEARCH_RADIUS..=SEARCH_RADIUS {
                let diff = (cur - shifted(&padded, h, w, dx, dy)?)?;
                costs.push(box3(&diff.sqr()?.mean_keepdim(1)?)?);
                offsets.push((dx as f32, dy as f32));
            }
        }
        let costs = Tensor::cat(&costs, 1)?;
        let temp = self.log_temp[level].as_tensor().exp()?.reshape((1, 1, 1, 1))?;
        let weights = candle_nn::ops::softmax(&costs.neg()?.broadcast_div(&temp)?, 1)?;
        let ox: Vec<f32> = offsets.iter().map(|o| o.0).collect();
        let oy: Vec<f32> = offsets.iter().map(|o| o.1).collect();
        let ox = Tensor::from_vec(ox, (1, SEARCH_TAPS, 1, 1), cur.device())?.to_dtype(cur.dtype())?;
        let oy = Tensor::from_vec(oy, (1, SEARCH_TAPS, 1, 1), cur.device())?.to_dtype(cur.dtype())?;
        let fx = weights.broadcast_mul(&ox)?.sum_keepdim(1)?;
        let fy = weights.broadcast_mul(&oy)?.sum_keepdim(1)?;
        Ok((costs, Tensor::cat(&[fx, fy], 1)?))
    }

    /// Flow mapping `cur` onto `reference`, so `warp(reference, flow) ≈ cur`.
    /// Both inputs are `(B, 3, H, W)` with `H`, `W` divisible by 4.
    pub fn estimate_motion(&self, cur: &Tensor, reference: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = cur.dims4()?;
        if reference.dims() != cur.dims() {
            return Err(NvcError::Argument(format!(
                "frames differ in shape ({:?} vs {:?})",
                cur.dims(),
                reference.dims()
            )));
        }
        if c != 3 || h % 4 != 0 || w % 4 != 0 {
            return Err(NvcError::Argument(format!(
                "motion needs 3-channel frames with sides divisible by 4, got {:?}",
                cur.dims()
            )));
        }
        let mut cur_pyr = vec![cur.clone()];
        let mut ref_pyr = vec![reference.clone()];
        for _ in 1..PYRAMID_LEVELS {
            cur_pyr.push(cur_pyr.last().unwrap().avg_pool2d(2)?);
            ref_pyr.push(ref_pyr.last().unwrap().avg_pool2d(2)?);
        }
        let coarse = &cur_pyr[PYRAMID_LEVELS - 1];
        let (_, _, ch, cw) = coarse.dims4()?;
        let mut flow = Tensor::zeros((b, 2, ch, cw), cur.dtype(), cur.device())?;
        for l in (0..PYRAMID_LEVELS).rev() {
            if l < PYRAMID_LEVELS - 1 {
                flow = upscale_flow(&flow)?;
            }
            let warped = warp(&ref_pyr[l], &flow)?;
            let (costs, delta) = self.cost_volume(&cur_pyr[l], &warped, l)?;
            flow = (flow + delta)?;
            let mut x = Tensor::cat(&[&cur_pyr[l], &warped, &flow, &costs.affine(100.0, 0.0)?], 1)?;
            let convs = &self.levels[l];
            for (j, conv) in convs.iter().enumerate() {
                x = conv.forward(&x)?;
                if j + 1 < convs.len() {
                    x = leaky_relu(&x)?;
                }
            }
            flow = (flow + x)?;
        }
        Ok(flow.clamp(-self.max_displacement, self.max_displacement)?)
    }

    pub fn estimate_motion_frames(&self, cur: &Frame, reference: &Frame, store: &ParamStore) -> Result<MotionField> {
        let c = cur.to_tensor(store.device(), store.dtype())?;
        let r = reference.to_tensor(store.device(), store.dtype())?;
        MotionField::from_tensor(&self.estimate_motion(&c, &r)?)
    }
}

/// Quantised motion latent: `(1, C, H/16, W/16)` integer symbols and their
/// modelled cost in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct MvLatent {
    pub symbols: Vec<i32>,
    pub shape: [usize; 4],
    pub bits: f64,
}

impl MvLatent {
    /// Bits per pixel of the `16h x 16w` frame this latent describes.
    pub fn bpp(&self) -> f64 {
        self.bits / (self.shape[2] * self.shape[3] * 256) as f64
    }
}

/// Training-mode output of [`MvCodec::forward_train`].
#[derive(Debug, Clone)]
pub struct MvTrainOutput {
    pub flow_hat: Tensor,
    pub bits: Tensor,
}

/// Four stride-2 analysis convolutions down to a 1/16 latent scaled by the
/// rate-dependent gain, a factorized Laplace prior with learned per-channel
/// scales, and four conv + depth-to-space synthesis stages.
#[derive(Debug, Clone)]
pub struct MvCodec {
    enc: Vec<Conv>,
    dec: Vec<UpConv>,
    log_scale: Var,
    latent: usize,
    max_displacement: f64,
    table: ScaleTable,
}

impl MvCodec {
    pub fn new(
        store: &mut ParamStore,
        hidden: usize,
        latent: usize,
        max_displacement: f64,
        support: i32,
    ) -> Result<Self> {
        let enc = vec![
            store.conv("mv_codec.enc.0", 2, hidden, 3, 2, 1.0)?,
            store.conv("mv_codec.enc.1", hidden, hidden, 3, 2, 1.0)?,
            store.conv("mv_codec.enc.2", hidden, hidden, 3, 2, 1.0)?,
            store.conv("mv_codec.enc.3", hidden, latent, 3, 2, 1.0)?,
        ];
        let dec = vec![
            store.up_conv("mv_codec.dec.0", latent, hidden)?,
            store.up_conv("mv_codec.dec.1", hidden, hidden)?,
            store.up_conv("mv_codec.dec.2", hidden, hidden)?,
            store.up_conv("mv_codec.dec.3", hidden, 2)?,
        ];
        let log_scale = store.constant("mv_entropy.log_scale", &[latent], 1.0)?;
        Ok(Self { enc, dec, log_scale, latent, max_displacement, table: ScaleTable::new(support)? })
    }

    pub fn latent_channels(&self) -> usize {
        self.latent
    }

    pub fn table(&self) -> &ScaleTable {
        &self.table
    }

    /// Unquantised latent `enc(flow) * q`.
    pub fn analysis(&self, flow: &Tensor, q: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = flow.dims4()?;
        if h % 16 != 0 || w % 16 != 0 {
            return Err(NvcError::Argument(format!("motion codec needs sides divisible by 16, got {h}x{w}")));
        }
        let mut x = (flow / FLOW_NORM)?;
        for (j, conv) in self.enc.iter().enumerate() {
            x = conv.forward(&x)?;
            if j + 1 < self.enc.len() {
                x = leaky_relu(&x)?;
            }
        }
        Ok(x.broadcast_mul(q)?)
    }

    pub fn synthesis(&self, y_hat: &Tensor, q: &Tensor) -> Result<Tensor> {
        let mut x = y_hat.broadcast_div(q)?;
        for (j, up) in self.dec.iter().enumerate() {
            x = up.forward(&x)?;
            if j + 1 < self.dec.len() {
                x = leaky_relu(&x)?;
            }
        }
        Ok((x * FLOW_NORM)?.clamp(-self.max_displacement, self.max_displacement)?)
    }

    /// Prior scale of the gained latent, `exp(log_scale) * q`.
    fn scale(&self, q: &Tensor) -> Result<Tensor> {
        Ok(self.log_scale.as_tensor().exp()?.reshape((1, (), 1, 1))?.broadcast_mul(q)?)
    }

    /// Differentiable bits of a (noisy or rounded) latent.
    pub fn rate_bits(&self, y_hat: &Tensor, q: &Tensor) -> Result<Tensor> {
        laplace_bits(y_hat, None, &self.scale(q)?)
    }

    pub fn forward_train(
        &self,
        flow: &Tensor,
        q: &Tensor,
        mode: QuantMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<MvTrainOutput> {
        let y = self.analysis(flow, q)?;
        let y_hat = quantize(&y, None, mode, rng)?;
        Ok(MvTrainOutput { bits: self.rate_bits(&y_hat, q)?, flow_hat: self.synthesis(&y_hat, q)? })
    }

    /// Coding-table index of every latent element, channel-major.
    pub fn scale_indices(&self, shape: [usize; 4], q: &Tensor) -> Result<Vec<usize>> {
        let scales = self.scale(q)?.to_dtype(candle_core::DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        let per_channel = shape[2] * shape[3];
        Ok(scales.iter().flat_map(|&s| std::iter::repeat_n(self.table.index_for(s), per_channel)).collect())
    }

    /// Rounds the latent of `flow` to symbols.
    pub fn mv_encode(&self, flow: &Tensor, q: &Tensor) -> Result<MvLatent> {
        let y = self.analysis(flow, q)?;
        let d = y.dims4()?;
        let shape = [d.0, d.1, d.2, d.3];
        let symbols = to_symbols(&y, None, self.table.support())?;
        let bits = self.table.estimate_bits(&symbols, &self.scale_indices(shape, q)?)?;
        Ok(MvLatent { symbols, shape, bits })
    }

    pub fn mv_decode(&self, latent: &MvLatent, q: &Tensor) -> Result<Tensor> {
        self.check_shape(latent.shape)?;
        let dev = self.log_scale.device();
        let y_hat = from_symbols(&latent.symbols, &latent.shape, None, dev)?.to_dtype(self.log_scale.dtype())?;
        self.synthesis(&y_hat, q)
    }

    fn check_shape(&self, shape: [usize; 4]) -> Result<()> {
        if shape[0] != 1 || shape[1] != self.latent {
            return Err(NvcError::Bitstream(format!(
                "motion latent has {} channels, model expects {}",
                shape[1], self.latent
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self, latent: &MvLatent, q: &Tensor) -> Result<Vec<u8>> {
        self.table.encode(&latent.symbols, &self.scale_indices(latent.shape, q)?)
    }

    /// Latent for a `height x width` frame from its range-coded bytes.
    pub fn from_bytes(&self, bytes: &[u8], height: usize, width: usize, q: &Tensor) -> Result<MvLatent> {
        let shape = [1, self.latent, height / 16, width / 16];
        let idx = self.scale_indices(shape, q)?;
        let symbols = self.table.decode(bytes, &idx)?;
        let bits = self.table.estimate_bits(&symbols, &idx)?;
        Ok(MvLatent { symbols, shape, bits })
    }
}
