//! Byte-oriented range coder: 32-bit range, 16-bit frequencies, carry
//! propagation through a cached byte (the LZMA layout). A stream of `k`
//! renormalizations is exactly `k + 5` bytes long and the decoder consumes
//! every byte, so stray or missing bytes are detectable.

use super::symbol_model::{SymbolModel, PRECISION_BITS};
use crate::error::{NvcError, Result};

const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    pub fn encode(&mut self, symbol: i32, model: &SymbolModel) -> Result<()> {
        let (start, freq) = model.interval(symbol).ok_or_else(|| {
            NvcError::Encode(format!(
                "symbol {symbol} outside model support [{}, {}]",
                model.min_symbol(),
                model.max_symbol()
            ))
        })?;
        let r = self.range >> PRECISION_BITS;
        self.low += u64::from(r) * u64::from(start);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 5 {
            return Err(NvcError::Bitstream(format!(
                "range-coded stream truncated: {} bytes, need at least 5",
                bytes.len()
            )));
        }
        let mut code = 0u32;
        // The first byte is the encoder's initial cache and is always zero.
        for &b in &bytes[1..5] {
            code = (code << 8) | u32::from(b);
        }
        Ok(Self { bytes, pos: 5, range: u32::MAX, code })
    }

    pub fn decode(&mut self, model: &SymbolModel) -> Result<i32> {
        let r = self.range >> PRECISION_BITS;
        let target = (self.code / r).min((1 << PRECISION_BITS) - 1);
        let (symbol, start, freq) = model.lookup(target);
        let offset = r * start;
        if self.code < offset {
            return Err(NvcError::Bitstream("range decoder state corrupt".into()));
        }
        self.code -= offset;
        self.range = r * freq;
        if self.code >= self.range {
            return Err(NvcError::Bitstream("range decoder state corrupt".into()));
        }
        while self.range < TOP {
            let byte = *self.bytes.get(self.pos).ok_or_else(|| {
                NvcError::Bitstream(format!("range-coded stream truncated after {} bytes", self.bytes.len()))
            })?;
            self.pos += 1;
            self.code = (self.code << 8) | u32::from(byte);
            self.range <<= 8;
        }
        Ok(symbol)
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Errors unless the whole stream was consumed.
    pub fn finish(self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(NvcError::Bitstream(format!("{n} trailing bytes after decoding; stream and model disagree"))),
        }
    }
}

pub fn range_encode(symbols: &[i32], model: &SymbolModel) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for &s in symbols {
        enc.encode(s, model)?;
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], count: usize, model: &SymbolModel) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let symbols = (0..count).map(|_| dec.decode(model)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(symbols)
}
