//! Rate control for the single variable-rate model.
//!
//! A rate index `idx ∈ [0, n-1]` selects the operating point. Training draws
//! indices from a piecewise sampler that splits the index range into four
//! equal quarters whose probability mass grows geometrically with ratio `m`,
//! so high-rate quarters are visited more often. The Lagrange multiplier and
//! the latent gains are exponential (log-linear) interpolations between their
//! bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NvcError, Result};

/// Sampler hyperparameters and gain initialization (`[rate]` config table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Growth ratio between consecutive quarter weights.
    pub m: f64,
    /// Number of rate indices; divisible by 4.
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Initial value of every per-channel lower gain bound.
    pub q_init_min: f64,
    /// Initial value of every per-channel upper gain bound.
    pub q_init_max: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { m: 2.0, n: 64, lambda_min: 0.002, lambda_max: 0.25, q_init_min: 0.5, q_init_max: 2.0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(NvcError::Config(format!("rate.m must be > 0, got {}", self.m)));
        }
        if self.n < 4 || !self.n.is_multiple_of(4) {
            return Err(NvcError::Config(format!("rate.n must be a positive multiple of 4, got {}", self.n)));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max && self.lambda_max.is_finite()) {
            return Err(NvcError::Config(format!(
                "need 0 < rate.lambda_min < rate.lambda_max, got {} and {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if !(self.q_init_min > 0.0 && self.q_init_min < self.q_init_max && self.q_init_max.is_finite()) {
            return Err(NvcError::Config(format!(
                "need 0 < rate.q_init_min < rate.q_init_max, got {} and {}",
                self.q_init_min, self.q_init_max
            )));
        }
        Ok(())
    }

    pub fn segment_len(&self) -> usize {
        self.n / 4
    }

    fn check_idx(&self, idx: usize) -> Result<()> {
        if idx >= self.n {
            return Err(NvcError::Argument(format!("rate index {idx} outside [0, {}]", self.n - 1)));
        }
        Ok(())
    }
}

/// Per-channel gain bounds. `min[c] < max[c]` is expected but only the
/// sampler config's initial values are validated; learned bounds may drift.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl GainRange {
    pub fn uniform(channels: usize, min: f64, max: f64) -> Self {
        Self { min: vec![min; channels], max: vec![max; channels] }
    }

    pub fn from_config(cfg: &SamplerConfig, channels: usize) -> Self {
        Self::uniform(channels, cfg.q_init_min, cfg.q_init_max)
    }
}

/// An operating point: rate index, its multiplier and its latent gains.
#[derive(Debug, Clone, PartialEq)]
pub struct RateControlPoint {
    pub idx: usize,
    pub lam: f64,
    pub q: Vec<f64>,
}

impl RateControlPoint {
    pub fn new(cfg: &SamplerConfig, gains: &GainRange, idx: usize) -> Result<Self> {
        Ok(Self { idx, lam: lambda_for_idx(cfg, idx)?, q: q_for_idx(cfg, gains, idx)? })
    }
}

/// Probability mass of each quarter: `m^k / (1 + m + m^2 + m^3)`.
pub fn segment_weights(cfg: &SamplerConfig) -> Result<[f64; 4]> {
    if !(cfg.m.is_finite() && cfg.m > 0.0) {
        return Err(NvcError::Config(format!("rate.m must be > 0, got {}", cfg.m)));
    }
    let m = cfg.m;
    let denom = 1.0 + m + m * m + m * m * m;
    Ok([1.0 / denom, m / denom, m * m / denom, m * m * m / denom])
}

/// Two-stage draw: pick a quarter by its weight, then an index uniformly
/// inside it. Quarters are the disjoint ranges `[k n/4, (k+1) n/4 - 1]`.
pub fn sample_idx<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Result<usize> {
    cfg.validate()?;
    let weights = segment_weights(cfg)?;
    let u: f64 = rng.gen();
    let mut segment = 3;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            segment = k;
            break;
        }
    }
    let len = cfg.segment_len();
    Ok(segment * len + rng.gen_range(0..len))
}

/// Uniform draw over all indices (the sampler ablation).
pub fn sample_idx_uniform<R: Rng + ?Sized>(cfg: &SamplerConfig, rng: &mut R) -> Result<usize> {
    cfg.validate()?;
    Ok(rng.gen_range(0..cfg.n))
}

/// Interpolation position of `idx` in `[0, 1]`; both endpoints are reached.
pub fn interp_fraction(cfg: &SamplerConfig, idx: usize) -> Result<f64> {
    cfg.check_idx(idx)?;
    Ok(idx as f64 / (cfg.n - 1) as f64)
}

fn log_interp(lo: f64, hi: f64, idx: usize, n: usize) -> f64 {
    if idx == 0 {
        lo
    } else if idx == n - 1 {
        hi
    } else {
        lo * (hi / lo).powf(idx as f64 / (n - 1) as f64)
    }
}

/// `lambda_min * (lambda_max / lambda_min)^(idx / (n - 1))`.
pub fn lambda_for_idx(cfg: &SamplerConfig, idx: usize) -> Result<f64> {
    cfg.check_idx(idx)?;
    Ok(log_interp(cfg.lambda_min, cfg.lambda_max, idx, cfg.n))
}

/// Elementwise `q_min * (q_max / q_min)^(idx / (n - 1))`.
pub fn q_for_idx(cfg: &SamplerConfig, gains: &GainRange, idx: usize) -> Result<Vec<f64>> {
    cfg.check_idx(idx)?;
    if gains.min.len() != gains.max.len() {
        return Err(NvcError::Argument(format!(
            "gain bounds have mismatched lengths {} and {}",
            gains.min.len(),
            gains.max.len()
        )));
    }
    if gains.min.iter().chain(&gains.max).any(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(NvcError::Argument("gain bounds must be positive and finite".into()));
    }
    Ok(gains.min.iter().zip(&gains.max).map(|(&lo, &hi)| log_interp(lo, hi, idx, cfg.n)).collect())
}
