use candle_core::{Device, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// How latents are made discrete while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive U(-0.5, 0.5) noise.
    Noise,
    /// Rounding in the forward pass, identity gradient.
    StraightThrough,
    /// Plain rounding; no gradient reaches the input.
    Round,
}

fn uniform_noise(shape: &[usize], device: &Device, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
    Ok(Tensor::from_vec(data, shape, device)?)
}

/// Quantises `y` around `mean` (zero when absent).
pub fn quantize(y: &Tensor, mean: Option<&Tensor>, mode: QuantMode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let rounded = || -> Result<Tensor> {
        Ok(match mean {
            Some(mu) => ((y - mu)?.round()? + mu)?,
            None => y.round()?,
        })
    };
    Ok(match mode {
        QuantMode::Noise => {
            let u = uniform_noise(y.dims(), y.device(), rng)?.to_dtype(y.dtype())?;
            (y + u)?
        }
        QuantMode::StraightThrough => ((rounded()? - y)?.detach() + y)?,
        QuantMode::Round => rounded()?.detach(),
    })
}

/// Integer symbols `clamp(round(y - mean), -support, support)`.
pub fn to_symbols(y: &Tensor, mean: Option<&Tensor>, support: i32) -> Result<Vec<i32>> {
    let centred = match mean {
        Some(mu) => (y - mu)?,
        None => y.clone(),
    };
    let vals = centred.to_dtype(candle_core::DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    let l = f64::from(support);
    Ok(vals.iter().map(|v| v.round().clamp(-l, l) as i32).collect())
}

/// `symbols + mean` shaped like `mean` (or `shape` when no mean is given).
pub fn from_symbols(symbols: &[i32], shape: &[usize], mean: Option<&Tensor>, device: &Device) -> Result<Tensor> {
    let data: Vec<f32> = symbols.iter().map(|&s| s as f32).collect();
    let s = Tensor::from_vec(data, shape, device)?;
    Ok(match mean {
        Some(mu) => (s.to_dtype(mu.dtype())? + mu)?,
        None => s,
    })
}
