//! Training objectives.
//!
//! Motion stages penalize the warped prediction, reconstruction stages the
//! full P-frame output. Rate-distortion forms are `lambda * D + R` with the
//! multiplier on the distortion. The algebra is written once against
//! [`LossValue`] so the trainer (tensors) and the tests (`f64`) share it.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{NvcError, Result};

/// Scalar-like values the objectives can be assembled from.
pub trait LossValue: Sized + Clone {
    fn add(&self, other: &Self) -> Result<Self>;
    fn scale(&self, k: f64) -> Result<Self>;
}

impl LossValue for f64 {
    fn add(&self, other: &Self) -> Result<Self> {
        Ok(self + other)
    }
    fn scale(&self, k: f64) -> Result<Self> {
        Ok(self * k)
    }
}

impl LossValue for Tensor {
    fn add(&self, other: &Self) -> Result<Self> {
        Ok((self + other)?)
    }
    fn scale(&self, k: f64) -> Result<Self> {
        Ok(self.affine(k, 0.0)?)
    }
}

/// Per-pixel mean squared error of two equally sized buffers.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(NvcError::Argument(format!("distortion inputs differ in size ({} vs {})", a.len(), b.len())));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Mean squared error of two tensors of identical shape, as a 0-d tensor.
pub fn mse_tensor(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(NvcError::Argument(format!(
            "distortion inputs differ in shape ({:?} vs {:?})",
            a.dims(),
            b.dims()
        )));
    }
    Ok((a - b)?.sqr()?.mean_all()?)
}

/// Distortion of the motion-compensated prediction.
pub fn loss_me_d<L: LossValue>(distortion: &L) -> L {
    distortion.clone()
}

pub fn loss_me_rd<L: LossValue>(distortion: &L, bpp_mv: &L, lambda: f64) -> Result<L> {
    distortion.scale(lambda)?.add(bpp_mv)
}

/// Distortion of the full P-frame reconstruction.
pub fn loss_rec_d<L: LossValue>(distortion: &L) -> L {
    distortion.clone()
}

pub fn loss_rec_rd<L: LossValue>(distortion: &L, bpp_context: &L, lambda: f64) -> Result<L> {
    distortion.scale(lambda)?.add(bpp_context)
}

pub fn loss_all<L: LossValue>(rec_rd: &L, bpp_mv: &L) -> Result<L> {
    rec_rd.add(bpp_mv)
}

/// Mean of the per-frame `loss_all` values over the coded P-frames.
pub fn loss_avg<L: LossValue>(per_frame: &[L]) -> Result<L> {
    let (first, rest) =
        per_frame.split_first().ok_or_else(|| NvcError::Argument("loss_avg needs at least one frame".into()))?;
    let mut acc = first.clone();
    for l in rest {
        acc = acc.add(l)?;
    }
    acc.scale(1.0 / per_frame.len() as f64)
}

/// Objective selector, one per schedule row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LossType {
    MeD,
    MeRd,
    RecD,
    RecRd,
    All,
    Avg,
}

impl LossType {
    /// Motion-only objectives train against the warped prediction.
    pub fn is_motion_only(self) -> bool {
        matches!(self, LossType::MeD | LossType::MeRd)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossType::MeD => "meD",
            LossType::MeRd => "meRD",
            LossType::RecD => "recD",
            LossType::RecRd => "recRD",
            LossType::All => "all",
            LossType::Avg => "avg",
        }
    }

    /// Per-frame objective. `distortion` is the prediction distortion for
    /// motion-only types and the reconstruction distortion otherwise.
    pub fn frame_loss<L: LossValue>(self, distortion: &L, bpp_mv: &L, bpp_context: &L, lambda: f64) -> Result<L> {
        match self {
            LossType::MeD => Ok(loss_me_d(distortion)),
            LossType::MeRd => loss_me_rd(distortion, bpp_mv, lambda),
            LossType::RecD => Ok(loss_rec_d(distortion)),
            LossType::RecRd => loss_rec_rd(distortion, bpp_context, lambda),
            LossType::All | LossType::Avg => loss_all(&loss_rec_rd(distortion, bpp_context, lambda)?, bpp_mv),
        }
    }
}

impl std::fmt::Display for LossType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossType {
    type Err = NvcError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "meD" => LossType::MeD,
            "meRD" => LossType::MeRd,
            "recD" => LossType::RecD,
            "recRD" => LossType::RecRd,
            "all" => LossType::All,
            "avg" => LossType::Avg,
            other => return Err(NvcError::Config(format!("unknown loss type {other:?}"))),
        })
    }
}

/// Components of one logged training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub distortion: f64,
    pub bpp_mv: f64,
    pub bpp_context: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_valid(&self) -> bool {
        [self.distortion, self.bpp_mv, self.bpp_context, self.total].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}
