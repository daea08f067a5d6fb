use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use super::ContextFeatures;
use crate::entropy_coding::{laplace_bits, quantize, QuantMode};
use crate::error::{NvcError, Result};
use crate::nn::{leaky_relu, Conv, ParamStore, UpConv};

fn check_sides(x: &Tensor) -> Result<()> {
    let (_, _, h, w) = x.dims4()?;
    if h % 16 != 0 || w % 16 != 0 {
        return Err(NvcError::Argument(format!("frame coder needs sides divisible by 16, got {h}x{w}")));
    }
    Ok(())
}

/// Training-mode output of the frame coders.
#[derive(Debug, Clone)]
pub struct CoderTrainOutput {
    /// New feature buffer (inter coder only).
    pub feat: Option<[Tensor; 3]>,
    /// Decoded frame for intra, residual over the prediction for inter.
    pub output: Tensor,
    pub bits: Tensor,
}

/// Four-stage stride-2 autoencoder conditioned on `c_t`: the encoder takes
/// `x_t` with `c_0`, then mixes in `c_1` and `c_2` at matching scales; the
/// prior predicts a mean and scale per latent element from `c_2`; the
/// decoder merges `c_2`, `c_1`, `c_0` on the way up and emits the next
/// feature buffer and a residual over the motion-compensated prediction.
#[derive(Debug, Clone)]
pub struct ConditionalCoder {
    enc: [Conv; 4],
    prior: [Conv; 2],
    up: [UpConv; 4],
    merge: [Conv; 3],
    head: Conv,
    latent: usize,
}

impl ConditionalCoder {
    pub fn new(store: &mut ParamStore, ch: [usize; 3], hidden: usize, latent: usize) -> Result<Self> {
        let p = "context.coder";
        Ok(Self {
            enc: [
                store.conv(&format!("{p}.enc0"), 3 + ch[0], hidden, 3, 2, 1.0)?,
                store.conv(&format!("{p}.enc1"), hidden + ch[1], hidden, 3, 2, 1.0)?,
                store.conv(&format!("{p}.enc2"), hidden + ch[2], hidden, 3, 2, 1.0)?,
                store.conv(&format!("{p}.enc3"), hidden, latent, 3, 2, 1.0)?,
            ],
            prior: [
                store.conv(&format!("{p}.prior0"), ch[2], hidden, 3, 2, 1.0)?,
                store.conv(&format!("{p}.prior1"), hidden, 2 * latent, 3, 2, 0.1)?,
            ],
            up: [
                store.up_conv(&format!("{p}.up0"), latent, hidden)?,
                store.up_conv(&format!("{p}.up1"), hidden, ch[2])?,
                store.up_conv(&format!("{p}.up2"), ch[2], ch[1])?,
                store.up_conv(&format!("{p}.up3"), ch[1], ch[0])?,
            ],
            merge: [
                store.conv(&format!("{p}.merge0"), 2 * ch[0], ch[0], 3, 1, 1.0)?,
                store.conv(&format!("{p}.merge1"), 2 * ch[1], ch[1], 3, 1, 1.0)?,
                store.conv(&format!("{p}.merge2"), 2 * ch[2], ch[2], 3, 1, 1.0)?,
            ],
            head: store.conv(&format!("{p}.head"), ch[0], 3, 3, 1, 0.1)?,
            latent,
        })
    }

    pub fn latent_channels(&self) -> usize {
        self.latent
    }

    pub fn analysis(&self, x: &Tensor, ctx: &ContextFeatures, q: &Tensor) -> Result<Tensor> {
        check_sides(x)?;
        let [c0, c1, c2] = &ctx.scales;
        let e0 = leaky_relu(&self.enc[0].forward(&Tensor::cat(&[x, c0], 1)?)?)?;
        let e1 = leaky_relu(&self.enc[1].forward(&Tensor::cat(&[&e0, c1], 1)?)?)?;
        let e2 = leaky_relu(&self.enc[2].forward(&Tensor::cat(&[&e1, c2], 1)?)?)?;
        Ok(self.enc[3].forward(&e2)?.broadcast_mul(q)?)
    }

    /// Mean and scale of the gained latent.
    pub fn prior(&self, ctx: &ContextFeatures, q: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = leaky_relu(&self.prior[0].forward(&ctx.scales[2])?)?;
        let p = self.prior[1].forward(&h)?;
        let mu = p.narrow(1, 0, self.latent)?.broadcast_mul(q)?;
        let scale = p.narrow(1, self.latent, self.latent)?.exp()?.broadcast_mul(q)?;
        Ok((mu, scale))
    }

    /// New feature buffer and the reconstruction residual.
    pub fn synthesis(&self, y_hat: &Tensor, ctx: &ContextFeatures, q: &Tensor) -> Result<([Tensor; 3], Tensor)> {
        let [c0, c1, c2] = &ctx.scales;
        let d = leaky_relu(&self.up[0].forward(&y_hat.broadcast_div(q)?)?)?;
        let u2 = leaky_relu(&self.up[1].forward(&d)?)?;
        let g2 = self.merge[2].forward(&Tensor::cat(&[&u2, c2], 1)?)?;
        let u1 = leaky_relu(&self.up[2].forward(&leaky_relu(&g2)?)?)?;
        let g1 = self.merge[1].forward(&Tensor::cat(&[&u1, c1], 1)?)?;
        let u0 = leaky_relu(&self.up[3].forward(&leaky_relu(&g1)?)?)?;
        let g0 = self.merge[0].forward(&Tensor::cat(&[&u0, c0], 1)?)?;
        let residual = self.head.forward(&leaky_relu(&g0)?)?;
        Ok(([g0, g1, g2], residual))
    }

    pub fn forward_train(
        &self,
        x: &Tensor,
        ctx: &ContextFeatures,
        q: &Tensor,
        mode: QuantMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<CoderTrainOutput> {
        let y = self.analysis(x, ctx, q)?;
        let (mu, scale) = self.prior(ctx, q)?;
        let y_hat = quantize(&y, Some(&mu), mode, rng)?;
        let bits = laplace_bits(&y_hat, Some(&mu), &scale)?;
        let (feat, residual) = self.synthesis(&y_hat, ctx, q)?;
        Ok(CoderTrainOutput { feat: Some(feat), output: residual, bits })
    }
}

/// Unconditional autoencoder for intra frames with a factorized Laplace
/// prior over its gained latent.
#[derive(Debug, Clone)]
pub struct IntraCodec {
    enc: [Conv; 4],
    dec: [UpConv; 4],
    log_scale: candle_core::Var,
    latent: usize,
}

impl IntraCodec {
    pub fn new(store: &mut ParamStore, hidden: usize, latent: usize) -> Result<Self> {
        Ok(Self {
            enc: [
                store.conv("intra.enc0", 3, hidden, 3, 2, 1.0)?,
                store.conv("intra.enc1", hidden, hidden, 3, 2, 1.0)?,
                store.conv("intra.enc2", hidden, hidden, 3, 2, 1.0)?,
                store.conv("intra.enc3", hidden, latent, 3, 2, 1.0)?,
            ],
            dec: [
                store.up_conv("intra.dec0", latent, hidden)?,
                store.up_conv("intra.dec1", hidden, hidden)?,
                store.up_conv("intra.dec2", hidden, hidden)?,
                store.up_conv("intra.dec3", hidden, 3)?,
            ],
            log_scale: store.constant("intra.entropy.log_scale", &[latent], 1.0)?,
            latent,
        })
    }

    pub fn latent_channels(&self) -> usize {
        self.latent
    }

    pub fn analysis(&self, x: &Tensor, q: &Tensor) -> Result<Tensor> {
        check_sides(x)?;
        let mut h = x.affine(1.0, -0.5)?;
        for (j, conv) in self.enc.iter().enumerate() {
            h = conv.forward(&h)?;
            if j + 1 < self.enc.len() {
                h = leaky_relu(&h)?;
            }
        }
        Ok(h.broadcast_mul(q)?)
    }

    pub fn synthesis(&self, y_hat: &Tensor, q: &Tensor) -> Result<Tensor> {
        Ok(self.synthesis_raw(y_hat, q)?.clamp(0.0, 1.0)?)
    }

    /// Synthesis before clamping to the pixel range.
    pub fn synthesis_raw(&self, y_hat: &Tensor, q: &Tensor) -> Result<Tensor> {
        let mut h = y_hat.broadcast_div(q)?;
        for (j, up) in self.dec.iter().enumerate() {
            h = up.forward(&h)?;
            if j + 1 < self.dec.len() {
                h = leaky_relu(&h)?;
            }
        }
        Ok(h.affine(1.0, 0.5)?)
    }

    /// Prior scale of the gained latent, `(1, C, 1, 1)`.
    pub fn scale(&self, q: &Tensor) -> Result<Tensor> {
        Ok(self.log_scale.as_tensor().exp()?.reshape((1, (), 1, 1))?.broadcast_mul(q)?)
    }

    pub fn forward_train(
        &self,
        x: &Tensor,
        q: &Tensor,
        mode: QuantMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<CoderTrainOutput> {
        let y = self.analysis(x, q)?;
        let y_hat = quantize(&y, None, mode, rng)?;
        let bits = laplace_bits(&y_hat, None, &self.scale(q)?)?;
        Ok(CoderTrainOutput { feat: None, output: self.synthesis_raw(&y_hat, q)?, bits })
    }
}

/// Initial three-scale feature buffer computed from the decoded intra frame.
#[derive(Debug, Clone)]
pub struct RefFeatureHead {
    stages: [(Conv, Conv); 3],
}

impl RefFeatureHead {
    pub fn new(store: &mut ParamStore, ch: [usize; 3]) -> Result<Self> {
        let p = "context.ref_head";
        Ok(Self {
            stages: [
                (
                    store.conv(&format!("{p}.s0a"), 3, ch[0], 3, 1, 1.0)?,
                    store.conv(&format!("{p}.s0b"), ch[0], ch[0], 3, 1, 1.0)?,
                ),
                (
                    store.conv(&format!("{p}.s1a"), ch[0], ch[1], 3, 2, 1.0)?,
                    store.conv(&format!("{p}.s1b"), ch[1], ch[1], 3, 1, 1.0)?,
                ),
                (
                    store.conv(&format!("{p}.s2a"), ch[1], ch[2], 3, 2, 1.0)?,
                    store.conv(&format!("{p}.s2b"), ch[2], ch[2], 3, 1, 1.0)?,
                ),
            ],
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<[Tensor; 3]> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(3);
        for (a, b) in &self.stages {
            h = b.forward(&leaky_relu(&a.forward(&h)?)?)?;
            out.push(h.clone());
            h = leaky_relu(&h)?;
        }
        Ok(out.try_into().expect("three scales"))
    }
}
