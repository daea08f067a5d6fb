use candle_core::{DType, IndexOp, Tensor};

use crate::error::{NvcError, Result};

/// Bilinear backward warp: `out(x, y) = src(x + dx, y + dy)`, with sample
/// positions clamped to the image so outside reads replicate the border.
/// `src` is `(B, C, H, W)`, `flow` is `(B, 2, H, W)` in pixels.
pub fn warp(src: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = src.dims4()?;
    let (fb, fc, fh, fw) = flow.dims4()?;
    if (fb, fc, fh, fw) != (b, 2, h, w) {
        return Err(NvcError::Argument(format!("flow {:?} does not match source {:?}", flow.dims(), src.dims())));
    }
    let dev = src.device();
    let dt = src.dtype();
    let flow = flow.to_dtype(dt)?;
    let gx = Tensor::arange(0u32, w as u32, dev)?.to_dtype(dt)?.reshape((1, 1, w))?.broadcast_as((b, h, w))?;
    let gy = Tensor::arange(0u32, h as u32, dev)?.to_dtype(dt)?.reshape((1, h, 1))?.broadcast_as((b, h, w))?;
    let x = (gx + flow.i((.., 0))?)?.clamp(0.0, (w - 1) as f64)?;
    let y = (gy + flow.i((.., 1))?)?.clamp(0.0, (h - 1) as f64)?;
    let x0 = x.detach().floor()?;
    let y0 = y.detach().floor()?;
    let wx = (&x - &x0)?.unsqueeze(1)?;
    let wy = (&y - &y0)?.unsqueeze(1)?;
    let x1 = (&x0 + 1.0)?.minimum((w - 1) as f64)?;
    let y1 = (&y0 + 1.0)?.minimum((h - 1) as f64)?;
    let flat = src.reshape((b, c, h * w))?;
    let sample = |yy: &Tensor, xx: &Tensor| -> Result<Tensor> {
        let idx = ((yy * w as f64)? + xx)?
            .to_dtype(DType::U32)?
            .reshape((b, 1, h * w))?
            .broadcast_as((b, c, h * w))?
            .contiguous()?;
        Ok(flat.gather(&idx, 2)?.reshape((b, c, h, w))?)
    };
    let ones = wx.ones_like()?;
    let (ax, ay) = ((&ones - &wx)?, (&ones - &wy)?);
    let top = (sample(&y0, &x0)?.broadcast_mul(&ax)? + sample(&y0, &x1)?.broadcast_mul(&wx)?)?;
    let bottom = (sample(&y1, &x0)?.broadcast_mul(&ax)? + sample(&y1, &x1)?.broadcast_mul(&wx)?)?;
    Ok((top.broadcast_mul(&ay)? + bottom.broadcast_mul(&wy)?)?)
}

/// Flow for a feature map `2^levels` times smaller: area-averaged (equal to
/// a bilinear half-size resize on even grids) and divided by the scale.
pub fn downscale_flow(flow: &Tensor, levels: usize) -> Result<Tensor> {
    let mut f = flow.clone();
    for _ in 0..levels {
        f = (f.avg_pool2d(2)? * 0.5)?;
    }
    Ok(f)
}

/// Nearest-neighbour doubling of a flow field with magnitudes doubled.
pub fn upscale_flow(flow: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = flow.dims4()?;
    Ok((flow.upsample_nearest2d(2 * h, 2 * w)? * 2.0)?)
}
