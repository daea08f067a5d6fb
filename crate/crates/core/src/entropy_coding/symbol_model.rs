use crate::error::{NvcError, Result};

/// Frequency precision of every model: cumulative tables total `2^16`.
pub const PRECISION_BITS: u32 = 16;
pub const TOTAL_FREQ: u32 = 1 << PRECISION_BITS;

/// Discrete distribution over the contiguous integer support
/// `[min_symbol, min_symbol + len - 1]`, stored as a strictly increasing
/// cumulative frequency table that ends at [`TOTAL_FREQ`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolModel {
    min_symbol: i32,
    cdf: Vec<u32>,
}

impl SymbolModel {
    pub fn from_frequencies(min_symbol: i32, freqs: &[u32]) -> Result<Self> {
        if freqs.is_empty() {
            return Err(NvcError::Model("symbol model needs at least one symbol".into()));
        }
        if freqs.contains(&0) {
            return Err(NvcError::Model("every in-support symbol needs mass >= 1".into()));
        }
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cdf.push(0);
        for &f in freqs {
            acc += u64::from(f);
            if acc > u64::from(TOTAL_FREQ) {
                break;
            }
            cdf.push(acc as u32);
        }
        if acc != u64::from(TOTAL_FREQ) {
            return Err(NvcError::Model(format!("frequencies must sum to {TOTAL_FREQ}, got {acc}")));
        }
        Ok(Self { min_symbol, cdf })
    }

    /// Quantizes a probability vector (any positive scale) to 16-bit
    /// frequencies. Each symbol keeps mass >= 1; rounding slack goes to the
    /// most probable symbol.
    pub fn from_probabilities(min_symbol: i32, probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        if n == 0 || n > TOTAL_FREQ as usize / 2 {
            return Err(NvcError::Model(format!("unsupported alphabet size {n}")));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(NvcError::Model("probabilities must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(NvcError::Model("probabilities sum to zero".into()));
        }
        let spare = f64::from(TOTAL_FREQ - n as u32);
        let mut freqs: Vec<u32> = probs.iter().map(|p| 1 + (p / sum * spare).floor() as u32).collect();
        let assigned: u32 = freqs.iter().sum();
        let argmax = probs.iter().enumerate().fold(0, |best, (i, p)| if *p > probs[best] { i } else { best });
        freqs[argmax] += TOTAL_FREQ - assigned;
        Self::from_frequencies(min_symbol, &freqs)
    }

    pub fn uniform(min_symbol: i32, max_symbol: i32) -> Result<Self> {
        if max_symbol < min_symbol {
            return Err(NvcError::Model("empty support".into()));
        }
        let n = (max_symbol - min_symbol + 1) as usize;
        Self::from_probabilities(min_symbol, &vec![1.0; n])
    }

    /// Discretized Laplace(mean, scale) over `[-support, support]`. The two
    /// edge symbols absorb the tails so the table covers the whole line.
    pub fn laplace(mean: f64, scale: f64, support: i32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && mean.is_finite()) || support < 0 {
            return Err(NvcError::Model(format!(
                "invalid Laplace parameters mean={mean} scale={scale} support={support}"
            )));
        }
        let cdf = |x: f64| {
            let d = (x - mean) / scale;
            if d < 0.0 {
                0.5 * d.exp()
            } else {
                1.0 - 0.5 * (-d).exp()
            }
        };
        let probs: Vec<f64> = (-support..=support)
            .map(|s| {
                let lo = if s == -support { 0.0 } else { cdf(f64::from(s) - 0.5) };
                let hi = if s == support { 1.0 } else { cdf(f64::from(s) + 0.5) };
                (hi - lo).max(0.0)
            })
            .collect();
        Self::from_probabilities(-support, &probs)
    }

    pub fn min_symbol(&self) -> i32 {
        self.min_symbol
    }

    pub fn max_symbol(&self) -> i32 {
        self.min_symbol + self.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn contains(&self, symbol: i32) -> bool {
        symbol >= self.min_symbol && symbol <= self.max_symbol()
    }

    /// `(cumulative start, frequency)` of an in-support symbol.
    pub fn interval(&self, symbol: i32) -> Option<(u32, u32)> {
        if !self.contains(symbol) {
            return None;
        }
        let i = (symbol - self.min_symbol) as usize;
        Some((self.cdf[i], self.cdf[i + 1] - self.cdf[i]))
    }

    /// Symbol whose interval contains `target < TOTAL_FREQ`.
    pub fn lookup(&self, target: u32) -> (i32, u32, u32) {
        // partition_point finds the first cdf entry > target; its predecessor starts the interval.
        let i = self.cdf.partition_point(|&c| c <= target) - 1;
        let i = i.min(self.len() - 1);
        (self.min_symbol + i as i32, self.cdf[i], self.cdf[i + 1] - self.cdf[i])
    }

    pub fn probability(&self, symbol: i32) -> f64 {
        self.interval(symbol).map_or(0.0, |(_, f)| f64::from(f) / f64::from(TOTAL_FREQ))
    }

    /// Shannon entropy of the quantized table, in bits per symbol.
    pub fn entropy_bits(&self) -> f64 {
        self.cdf
            .windows(2)
            .map(|w| {
                let p = f64::from(w[1] - w[0]) / f64::from(TOTAL_FREQ);
                -p * p.log2()
            })
            .sum()
    }
}

/// Ideal code length `sum(-log2 p(s))` of `symbols` under `model`.
pub fn estimate_bits(symbols: &[i32], model: &SymbolModel) -> Result<f64> {
    estimate_bits_with(symbols, |_| model)
}

/// Same as [`estimate_bits`] with a model chosen per symbol position.
pub fn estimate_bits_with<'m, F>(symbols: &[i32], mut model_for: F) -> Result<f64>
where
    F: FnMut(usize) -> &'m SymbolModel,
{
    let mut bits = 0.0;
    for (i, &s) in symbols.iter().enumerate() {
        let model = model_for(i);
        let (_, f) = model
            .interval(s)
            .ok_or_else(|| NvcError::Model(format!("symbol {s} at position {i} has zero probability")))?;
        bits += f64::from(PRECISION_BITS) - f64::from(f).log2();
    }
    Ok(bits)
}
