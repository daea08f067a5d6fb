//! Bit estimation for training and exact range coding for real bitstreams.
//!
//! Latents are modelled with Laplace densities. During training the rate is
//! the differentiable `-log2` of the Laplace mass of each (noisy) value; at
//! coding time the same densities are discretized into 16-bit
//! [`SymbolModel`]s drawn from a fixed, log-spaced table of scales so encoder
//! and decoder always build identical tables.

mod laplace;
mod quant;
mod range_coder;
mod symbol_model;

pub use laplace::{laplace_bits, laplace_likelihood, LIKELIHOOD_FLOOR};
pub use quant::{from_symbols, quantize, to_symbols, QuantMode};
pub use range_coder::{range_decode, range_encode, RangeDecoder, RangeEncoder};
pub use symbol_model::{estimate_bits, estimate_bits_with, SymbolModel, PRECISION_BITS, TOTAL_FREQ};

use crate::error::Result;

/// Smallest scale used by both the training likelihood and the coding tables.
pub const SCALE_MIN: f64 = 0.11;
pub const SCALE_MAX: f64 = 64.0;
pub const SCALE_LEVELS: usize = 64;

/// Zero-mean discretized Laplace models at `SCALE_LEVELS` log-spaced scales.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    scales: Vec<f64>,
    models: Vec<SymbolModel>,
    support: i32,
}

impl ScaleTable {
    pub fn new(support: i32) -> Result<Self> {
        let ratio = (SCALE_MAX / SCALE_MIN).ln();
        let scales: Vec<f64> =
            (0..SCALE_LEVELS).map(|i| SCALE_MIN * (ratio * i as f64 / (SCALE_LEVELS - 1) as f64).exp()).collect();
        let models = scales.iter().map(|&s| SymbolModel::laplace(0.0, s, support)).collect::<Result<Vec<_>>>()?;
        Ok(Self { scales, models, support })
    }

    pub fn support(&self) -> i32 {
        self.support
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Index of the table scale nearest to `scale` in log space.
    pub fn index_for(&self, scale: f64) -> usize {
        let s = scale.clamp(SCALE_MIN, SCALE_MAX);
        let pos = (s / SCALE_MIN).ln() / (SCALE_MAX / SCALE_MIN).ln() * (SCALE_LEVELS - 1) as f64;
        (pos.round() as usize).min(SCALE_LEVELS - 1)
    }

    pub fn model(&self, index: usize) -> &SymbolModel {
        &self.models[index]
    }

    pub fn encode(&self, symbols: &[i32], scale_idx: &[usize]) -> Result<Vec<u8>> {
        let mut enc = RangeEncoder::new();
        for (&s, &k) in symbols.iter().zip(scale_idx) {
            enc.encode(s, &self.models[k])?;
        }
        Ok(enc.finish())
    }

    pub fn decode(&self, bytes: &[u8], scale_idx: &[usize]) -> Result<Vec<i32>> {
        let mut dec = RangeDecoder::new(bytes)?;
        let symbols = scale_idx.iter().map(|&k| dec.decode(&self.models[k])).collect::<Result<Vec<_>>>()?;
        dec.finish()?;
        Ok(symbols)
    }

    pub fn estimate_bits(&self, symbols: &[i32], scale_idx: &[usize]) -> Result<f64> {
        estimate_bits_with(symbols, |i| &self.models[scale_idx[i]])
    }
}
