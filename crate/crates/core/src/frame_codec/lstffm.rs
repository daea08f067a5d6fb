use candle_core::Tensor;

use super::{ContextFeatures, DecodedState};
use crate::error::{NvcError, Result};
use crate::motion::{downscale_flow, warp};
use crate::nn::{leaky_relu, Conv, ConvBlock, ParamStore, UpConv};

/// Long-term pyramid over the raw reference frame: stride-2 downsampling
/// with residual conv–LeakyReLU–conv refiners per level, then a top-down
/// path of conv + depth-to-space upsampling with additive merges.
#[derive(Debug, Clone)]
struct LongTermPyramid {
    stem: Conv,
    down: [Conv; 2],
    refine: [ConvBlock; 3],
    up: [UpConv; 2],
}

impl LongTermPyramid {
    fn new(store: &mut ParamStore, ch: [usize; 3]) -> Result<Self> {
        let p = "context.lstffm.long";
        Ok(Self {
            stem: store.conv(&format!("{p}.stem"), 3, ch[0], 3, 1, 1.0)?,
            down: [
                store.conv(&format!("{p}.down1"), ch[0], ch[1], 3, 2, 1.0)?,
                store.conv(&format!("{p}.down2"), ch[1], ch[2], 3, 2, 1.0)?,
            ],
            refine: [
                ConvBlock::new(store, &format!("{p}.ltfc0"), ch[0], ch[0], ch[0])?,
                ConvBlock::new(store, &format!("{p}.ltfc1"), ch[1], ch[1], ch[1])?,
                ConvBlock::new(store, &format!("{p}.ltfc2"), ch[2], ch[2], ch[2])?,
            ],
            up: [store.up_conv(&format!("{p}.up1"), ch[1], ch[0])?, store.up_conv(&format!("{p}.up2"), ch[2], ch[1])?],
        })
    }

    fn forward(&self, lt: &Tensor) -> Result<[Tensor; 3]> {
        let h0 = self.stem.forward(lt)?;
        let l0 = (&h0 + self.refine[0].forward(&h0)?)?;
        let h1 = self.down[0].forward(&leaky_relu(&l0)?)?;
        let l1 = (&h1 + self.refine[1].forward(&h1)?)?;
        let h2 = self.down[1].forward(&leaky_relu(&l1)?)?;
        let p2 = (&h2 + self.refine[2].forward(&h2)?)?;
        let p1 = (l1 + self.up[1].forward(&p2)?)?;
        let p0 = (l0 + self.up[0].forward(&p1)?)?;
        Ok([p0, p1, p2])
    }
}

/// Builds `c_t` from the motion-compensated feature buffer (short term)
/// and, unless disabled, a pyramid over the long-term reference frame.
#[derive(Debug, Clone)]
pub struct Lstffm {
    short: [ConvBlock; 3],
    long: Option<LongTermPyramid>,
    fuse: [ConvBlock; 3],
    channels: [usize; 3],
}

impl Lstffm {
    pub fn new(store: &mut ParamStore, ch: [usize; 3], long_term: bool) -> Result<Self> {
        let block = |store: &mut ParamStore, name: &str, s: usize, cin: usize| {
            ConvBlock::new(store, &format!("context.lstffm.{name}{s}"), cin, ch[s], ch[s])
        };
        let short =
            [block(store, "short", 0, ch[0])?, block(store, "short", 1, ch[1])?, block(store, "short", 2, ch[2])?];
        let long = if long_term { Some(LongTermPyramid::new(store, ch)?) } else { None };
        let k = if long_term { 2 } else { 1 };
        let fuse = [
            block(store, "fuse", 0, k * ch[0])?,
            block(store, "fuse", 1, k * ch[1])?,
            block(store, "fuse", 2, k * ch[2])?,
        ];
        Ok(Self { short, long, fuse, channels: ch })
    }

    pub fn has_long_term(&self) -> bool {
        self.long.is_some()
    }

    /// `feat` holds the three buffer scales, `lt` the long-term reference
    /// frame and `flow` the decoded full-resolution motion.
    pub fn fuse(&self, feat: &[Tensor; 3], lt: &Tensor, flow: &Tensor) -> Result<ContextFeatures> {
        let (_, _, h, w) = lt.dims4()?;
        if flow.dims4()?.2 != h || flow.dims4()?.3 != w {
            return Err(NvcError::Argument(format!(
                "flow {:?} does not match long-term reference {:?}",
                flow.dims(),
                lt.dims()
            )));
        }
        for (s, f) in feat.iter().enumerate() {
            let (_, c, fh, fw) = f.dims4()?;
            if c != self.channels[s] || fh != h >> s || fw != w >> s {
                return Err(NvcError::Argument(format!(
                    "feature scale {s} is {:?}, expected {} channels at {}x{}",
                    f.dims(),
                    self.channels[s],
                    h >> s,
                    w >> s
                )));
            }
        }
        let long = match &self.long {
            Some(p) => Some(p.forward(lt)?),
            None => None,
        };
        let mut out = Vec::with_capacity(3);
        for s in 0..3 {
            let warped = warp(&feat[s], &downscale_flow(flow, s)?)?;
            let short = self.short[s].forward(&warped)?;
            let merged = match &long {
                Some(l) => Tensor::cat(&[&short, &l[s]], 1)?,
                None => short,
            };
            out.push(self.fuse[s].forward(&merged)?);
        }
        let [c0, c1, c2]: [Tensor; 3] = out.try_into().expect("three scales");
        Ok(ContextFeatures { scales: [c0, c1, c2] })
    }

    /// [`Lstffm::fuse`] on a decoder state.
    pub fn lstffm_fuse(&self, state: &DecodedState, lt: &Tensor, flow: &Tensor) -> Result<ContextFeatures> {
        self.fuse(&state.feat, lt, flow)
    }
}
