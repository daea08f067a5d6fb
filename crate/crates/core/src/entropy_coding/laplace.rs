use candle_core::Tensor;

use super::SCALE_MIN;
use crate::error::Result;

/// Lower bound applied to every modelled probability.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;

/// Mass of the unit bin centred on each value under Laplace(mean, scale),
/// `P(v - 0.5 < X < v + 0.5)`, differentiable in `values`, `mean` and `scale`.
/// Scales are clamped below at [`SCALE_MIN`].
pub fn laplace_likelihood(values: &Tensor, mean: Option<&Tensor>, scale: &Tensor) -> Result<Tensor> {
    let centred = match mean {
        Some(mu) => values.broadcast_sub(mu)?,
        None => values.clone(),
    };
    let b = scale.broadcast_as(centred.shape())?.clamp(SCALE_MIN, f64::INFINITY)?;
    // The bin mass is symmetric in the offset, so work with a = |v - mean|.
    let a = centred.abs()?;
    // Far branch (a >= 0.5): 0.5 * (exp(-(a-0.5)/b) - exp(-(a+0.5)/b)).
    let far_a = a.maximum(0.5)?;
    let far = ((far_a.affine(1.0, -0.5)?.neg()? / &b)?.exp()? - (far_a.affine(1.0, 0.5)?.neg()? / &b)?.exp()?)?
        .affine(0.5, 0.0)?;
    // Near branch (a < 0.5): 1 - 0.5 * exp(-(a+0.5)/b) - 0.5 * exp(-(0.5-a)/b).
    let near_a = a.minimum(0.5)?;
    let near = ((near_a.affine(1.0, 0.5)?.neg()? / &b)?.exp()? + (near_a.affine(-1.0, 0.5)?.neg()? / &b)?.exp()?)?
        .affine(-0.5, 1.0)?;
    let use_far = a.ge(0.5)?;
    let p = use_far.where_cond(&far, &near)?;
    Ok(p.maximum(LIKELIHOOD_FLOOR)?)
}

/// Total `-log2` likelihood (a 0-d tensor) of `values`.
pub fn laplace_bits(values: &Tensor, mean: Option<&Tensor>, scale: &Tensor) -> Result<Tensor> {
    let p = laplace_likelihood(values, mean, scale)?;
    Ok(p.log()?.sum_all()?.affine(-std::f64::consts::LOG2_E, 0.0)?)
}
