use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;

use super::coder::{ConditionalCoder, IntraCodec, RefFeatureHead};
use super::lstffm::Lstffm;
use super::{CtxLatent, DecodedState};
use crate::config::ModelConfig;
use crate::entropy_coding::{from_symbols, to_symbols, QuantMode, ScaleTable};
use crate::error::{NvcError, Result};
use crate::motion::{warp, FlowNet, MvCodec, MvLatent};
use crate::nn::{LearnedGains, ParamStore};
use crate::rate_control::{interp_fraction, lambda_for_idx, RateControlPoint, SamplerConfig};

/// Gains of the three latent streams at one rate index, each `(1, C, 1, 1)`.
#[derive(Debug, Clone)]
pub struct RateGains {
    pub mv: Tensor,
    pub ctx: Tensor,
    pub intra: Tensor,
}

/// How a training P-frame is rolled out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InterMode {
    /// Reconstruct with the warped prediction alone, skipping the frame coder.
    pub motion_only: bool,
    /// Stop gradients from the motion codec into the flow estimator.
    pub detach_flow: bool,
}

#[derive(Debug, Clone)]
pub struct IntraTrain {
    pub x_hat: Tensor,
    /// `x_hat` before clamping; training distortion is measured on it so
    /// saturated pixels keep their gradient.
    pub raw: Tensor,
    pub bits: Tensor,
}

#[derive(Debug, Clone)]
pub struct InterTrain {
    /// Motion-compensated prediction `warp(x̂_{t-1}, m̂v)`.
    pub pred: Tensor,
    pub x_hat: Tensor,
    /// `x_hat` before clamping.
    pub raw: Tensor,
    pub bits_mv: Tensor,
    pub bits_ctx: Tensor,
    pub state: DecodedState,
}

#[derive(Debug, Clone)]
pub struct IntraCoded {
    pub latent: CtxLatent,
    pub bytes: Vec<u8>,
    pub x_hat: Tensor,
    pub state: DecodedState,
}

#[derive(Debug, Clone)]
pub struct InterCoded {
    pub mv: MvLatent,
    pub ctx: CtxLatent,
    pub mv_bytes: Vec<u8>,
    pub ctx_bytes: Vec<u8>,
    pub x_hat: Tensor,
    pub state: DecodedState,
}

/// Everything the decoder derives from the motion stream alone.
struct InterContext {
    pred: Tensor,
    ctx: super::ContextFeatures,
    mu: Tensor,
    scale_idx: Vec<usize>,
}

/// The complete codec: flow estimation, motion coding, context fusion,
/// conditional and intra frame coding, and per-stream learned gains.
#[derive(Debug)]
pub struct VideoModel {
    model_cfg: ModelConfig,
    rate_cfg: SamplerConfig,
    store: ParamStore,
    pub flow_net: FlowNet,
    pub mv_codec: MvCodec,
    pub lstffm: Lstffm,
    pub coder: ConditionalCoder,
    pub intra: IntraCodec,
    pub ref_head: RefFeatureHead,
    mv_gain: LearnedGains,
    ctx_gain: LearnedGains,
    intra_gain: LearnedGains,
    table: ScaleTable,
}

impl VideoModel {
    pub fn new(
        model_cfg: &ModelConfig,
        rate_cfg: &SamplerConfig,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        model_cfg.validate()?;
        rate_cfg.validate()?;
        let m = model_cfg;
        let mut store = ParamStore::new(seed, dtype, device);
        let flow_net = FlowNet::new(&mut store, m.flow_hidden, m.max_displacement)?;
        let mv_codec = MvCodec::new(&mut store, m.flow_hidden, m.mv_latent, m.max_displacement, m.support)?;
        let lstffm = Lstffm::new(&mut store, m.feat_channels, m.long_term)?;
        let coder = ConditionalCoder::new(&mut store, m.feat_channels, m.coder_hidden, m.ctx_latent)?;
        let intra = IntraCodec::new(&mut store, m.coder_hidden, m.intra_latent)?;
        let ref_head = RefFeatureHead::new(&mut store, m.feat_channels)?;
        let (lo, hi) = (rate_cfg.q_init_min, rate_cfg.q_init_max);
        let mv_gain = LearnedGains::new(&mut store, "mv_codec.gain", m.mv_latent, lo, hi)?;
        let ctx_gain = LearnedGains::new(&mut store, "context.gain", m.ctx_latent, lo, hi)?;
        let intra_gain = LearnedGains::new(&mut store, "intra.gain", m.intra_latent, lo, hi)?;
        Ok(Self {
            model_cfg: m.clone(),
            rate_cfg: rate_cfg.clone(),
            store,
            flow_net,
            mv_codec,
            lstffm,
            coder,
            intra,
            ref_head,
            mv_gain,
            ctx_gain,
            intra_gain,
            table: ScaleTable::new(m.support)?,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_cfg
    }

    pub fn rate_config(&self) -> &SamplerConfig {
        &self.rate_cfg
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn gains(&self, idx: usize) -> Result<RateGains> {
        let f = interp_fraction(&self.rate_cfg, idx)?;
        Ok(RateGains { mv: self.mv_gain.q(f)?, ctx: self.ctx_gain.q(f)?, intra: self.intra_gain.q(f)? })
    }

    /// Operating point of rate index `idx`, reporting the frame-coder gains.
    pub fn rate_point(&self, idx: usize) -> Result<RateControlPoint> {
        RateControlPoint::new(&self.rate_cfg, &self.ctx_gain.range()?, idx)
    }

    pub fn lambda(&self, idx: usize) -> Result<f64> {
        lambda_for_idx(&self.rate_cfg, idx)
    }

    pub fn start_state(&self, x_hat0: &Tensor) -> Result<DecodedState> {
        Ok(DecodedState::new(x_hat0.clone(), self.ref_head.forward(x_hat0)?))
    }

    pub fn intra_train(&self, x0: &Tensor, idx: usize, mode: QuantMode, rng: &mut ChaCha8Rng) -> Result<IntraTrain> {
        let g = self.gains(idx)?;
        let out = self.intra.forward_train(x0, &g.intra, mode, rng)?;
        Ok(IntraTrain { x_hat: out.output.clamp(0.0, 1.0)?, raw: out.output, bits: out.bits })
    }

    /// One P-frame in training mode.
    pub fn inter_train(
        &self,
        x: &Tensor,
        state: &DecodedState,
        idx: usize,
        mode: QuantMode,
        inter: InterMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<InterTrain> {
        let g = self.gains(idx)?;
        let prev = state.prev()?;
        let flow = self.flow_net.estimate_motion(x, prev)?;
        let coded = if inter.detach_flow { flow.detach() } else { flow.clone() };
        let mv = self.mv_codec.forward_train(&coded, &g.mv, mode, rng)?;
        let pred = warp(prev, &mv.flow_hat)?;
        let mut next = state.clone();
        if inter.motion_only {
            next.advance(pred.clone(), state.feat.clone());
            let zero = Tensor::zeros((), x.dtype(), x.device())?;
            return Ok(InterTrain {
                x_hat: pred.clone(),
                raw: pred.clone(),
                pred,
                bits_mv: mv.bits,
                bits_ctx: zero,
                state: next,
            });
        }
        let ctx = self.lstffm.fuse(&state.feat, state.long_term_ref()?, &mv.flow_hat)?;
        let out = self.coder.forward_train(x, &ctx, &g.ctx, mode, rng)?;
        let raw = (&pred + &out.output)?;
        let x_hat = raw.clamp(0.0, 1.0)?;
        next.advance(x_hat.clone(), out.feat.expect("inter coder returns features"));
        Ok(InterTrain { pred, x_hat, raw, bits_mv: mv.bits, bits_ctx: out.bits, state: next })
    }

    fn dims(x: &Tensor) -> Result<(usize, usize)> {
        let (b, c, h, w) = x.dims4()?;
        if b != 1 || c != 3 || h % 16 != 0 || w % 16 != 0 {
            return Err(NvcError::Argument(format!(
                "codec takes one 3-channel frame with sides divisible by 16, got {:?}",
                x.dims()
            )));
        }
        Ok((h, w))
    }

    fn intra_indices(&self, shape: [usize; 4], q: &Tensor) -> Result<Vec<usize>> {
        let scales = self.intra.scale(q)?.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        let per = shape[2] * shape[3];
        Ok(scales.iter().flat_map(|&s| std::iter::repeat_n(self.table.index_for(s), per)).collect())
    }

    fn intra_reconstruct(&self, symbols: &[i32], shape: [usize; 4], q: &Tensor) -> Result<(Tensor, DecodedState)> {
        let y_hat = from_symbols(symbols, &shape, None, self.device())?.to_dtype(self.dtype())?;
        let x_hat = self.intra.synthesis(&y_hat, q)?;
        let state = self.start_state(&x_hat)?;
        Ok((x_hat, state))
    }

    pub fn encode_intra(&self, x0: &Tensor, idx: usize) -> Result<IntraCoded> {
        Self::dims(x0)?;
        let g = self.gains(idx)?;
        let y = self.intra.analysis(x0, &g.intra)?;
        let d = y.dims4()?;
        let shape = [d.0, d.1, d.2, d.3];
        let symbols = to_symbols(&y, None, self.table.support())?;
        let sidx = self.intra_indices(shape, &g.intra)?;
        let bytes = self.table.encode(&symbols, &sidx)?;
        let bits = self.table.estimate_bits(&symbols, &sidx)?;
        let (x_hat, state) = self.intra_reconstruct(&symbols, shape, &g.intra)?;
        Ok(IntraCoded { latent: CtxLatent { symbols, shape, bits }, bytes, x_hat, state })
    }

    /// Decodes an intra frame of padded size `height x width`.
    pub fn decode_intra(
        &self,
        bytes: &[u8],
        height: usize,
        width: usize,
        idx: usize,
    ) -> Result<(Tensor, DecodedState)> {
        if !height.is_multiple_of(16) || !width.is_multiple_of(16) || height == 0 || width == 0 {
            return Err(NvcError::Bitstream(format!("coded size {width}x{height} is not a multiple of 16")));
        }
        let g = self.gains(idx)?;
        let shape = [1, self.model_cfg.intra_latent, height / 16, width / 16];
        let symbols = self.table.decode(bytes, &self.intra_indices(shape, &g.intra)?)?;
        self.intra_reconstruct(&symbols, shape, &g.intra)
    }

    fn inter_context(&self, state: &DecodedState, mv: &MvLatent, g: &RateGains) -> Result<InterContext> {
        let prev = state.prev()?;
        let mv_hat = self.mv_codec.mv_decode(mv, &g.mv)?;
        let pred = warp(prev, &mv_hat)?;
        let ctx = self.lstffm.fuse(&state.feat, state.long_term_ref()?, &mv_hat)?;
        let (mu, scale) = self.coder.prior(&ctx, &g.ctx)?;
        let scales = scale.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        let scale_idx = scales.iter().map(|&s| self.table.index_for(s)).collect();
        Ok(InterContext { pred, ctx, mu, scale_idx })
    }

    fn inter_reconstruct(
        &self,
        ic: &InterContext,
        symbols: &[i32],
        g: &RateGains,
        state: &DecodedState,
    ) -> Result<(Tensor, DecodedState)> {
        let y_hat = from_symbols(symbols, ic.mu.dims(), Some(&ic.mu), self.device())?;
        let (feat, residual) = self.coder.synthesis(&y_hat, &ic.ctx, &g.ctx)?;
        let x_hat = (&ic.pred + residual)?.clamp(0.0, 1.0)?;
        let mut next = state.clone();
        next.advance(x_hat.clone(), feat);
        Ok((x_hat, next))
    }

    pub fn encode_inter(&self, x: &Tensor, state: &DecodedState, idx: usize) -> Result<InterCoded> {
        let (h, w) = Self::dims(x)?;
        let prev = state.prev()?;
        if prev.dims() != x.dims() {
            return Err(NvcError::State(format!(
                "decoder state holds {:?} frames, frame is {:?}",
                prev.dims(),
                x.dims()
            )));
        }
        let g = self.gains(idx)?;
        let flow = self.flow_net.estimate_motion(x, prev)?;
        let mv = self.mv_codec.mv_encode(&flow, &g.mv)?;
        let mv_bytes = self.mv_codec.to_bytes(&mv, &g.mv)?;
        let ic = self.inter_context(state, &mv, &g)?;
        let y = self.coder.analysis(x, &ic.ctx, &g.ctx)?;
        let symbols = to_symbols(&y, Some(&ic.mu), self.table.support())?;
        let ctx_bytes = self.table.encode(&symbols, &ic.scale_idx)?;
        let bits = self.table.estimate_bits(&symbols, &ic.scale_idx)?;
        let d = y.dims4()?;
        let ctx = CtxLatent { symbols, shape: [d.0, d.1, d.2, d.3], bits };
        let (x_hat, state) = self.inter_reconstruct(&ic, &ctx.symbols, &g, state)?;
        debug_assert_eq!((h, w), (16 * d.2, 16 * d.3));
        Ok(InterCoded { mv, ctx, mv_bytes, ctx_bytes, x_hat, state })
    }

    pub fn decode_inter(
        &self,
        mv_bytes: &[u8],
        ctx_bytes: &[u8],
        state: &DecodedState,
        idx: usize,
    ) -> Result<(Tensor, DecodedState)> {
        let (_, _, h, w) = state.prev()?.dims4()?;
        let g = self.gains(idx)?;
        let mv = self.mv_codec.from_bytes(mv_bytes, h, w, &g.mv)?;
        let ic = self.inter_context(state, &mv, &g)?;
        let symbols = self.table.decode(ctx_bytes, &ic.scale_idx)?;
        self.inter_reconstruct(&ic, &symbols, &g, state)
    }
}
