//! `EVNV` container: an 18-byte little-endian header followed by one record
//! per coded frame.

use crate::error::{NvcError, Result};

pub const MAGIC: [u8; 4] = *b"EVNV";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    /// Original, pre-padding size.
    pub width: u16,
    pub height: u16,
    pub frame_count: u16,
    /// Distance between intra frames; -1 codes a single leading I-frame.
    pub intra_period: i16,
    pub q_idx: u8,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5..7].copy_from_slice(&self.width.to_le_bytes());
        b[7..9].copy_from_slice(&self.height.to_le_bytes());
        b[9..11].copy_from_slice(&self.frame_count.to_le_bytes());
        b[11..13].copy_from_slice(&self.intra_period.to_le_bytes());
        b[13] = self.q_idx;
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_BYTES {
            return Err(NvcError::Bitstream(format!("header needs {HEADER_BYTES} bytes, stream has {}", b.len())));
        }
        if b[0..4] != MAGIC {
            return Err(NvcError::Bitstream(format!("bad magic {:02x?}", &b[0..4])));
        }
        if b[4] != VERSION {
            return Err(NvcError::Bitstream(format!("unsupported version {}", b[4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let reserved = u32::from_le_bytes([b[14], b[15], b[16], b[17]]);
        if reserved != 0 {
            return Err(NvcError::Bitstream(format!("reserved field is {reserved:#x}, expected 0")));
        }
        let h = Self {
            width: u16_at(5),
            height: u16_at(7),
            frame_count: u16_at(9),
            intra_period: i16::from_le_bytes([b[11], b[12]]),
            q_idx: b[13],
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(NvcError::Bitstream(format!("empty frame size {}x{}", self.width, self.height)));
        }
        if self.intra_period == 0 || self.intra_period < -1 {
            return Err(NvcError::Bitstream(format!("invalid intra period {}", self.intra_period)));
        }
        Ok(())
    }

    /// Whether frame `t` is intra coded under this header's period.
    pub fn is_intra(&self, t: usize) -> bool {
        t == 0 || (self.intra_period > 0 && t.is_multiple_of(self.intra_period as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    I = 0,
    P = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_type: FrameType,
    /// Empty for I-frames.
    pub mv: Vec<u8>,
    pub ctx: Vec<u8>,
}

impl FrameRecord {
    pub fn coded_bytes(&self) -> usize {
        1 + 4 + self.mv.len() + 4 + self.ctx.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: Header,
    pub frames: Vec<FrameRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str, record: usize) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(NvcError::Bitstream(format!(
                "record {record}: truncated {what} (needs {n} bytes, {left} left)"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str, record: usize) -> Result<usize> {
        let s = self.take(4, what, record)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize)
    }
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.frames.len() != usize::from(self.header.frame_count) {
            return Err(NvcError::Encode(format!(
                "header announces {} frames, {} records given",
                self.header.frame_count,
                self.frames.len()
            )));
        }
        let mut out = self.header.to_bytes().to_vec();
        for (i, f) in self.frames.iter().enumerate() {
            if f.frame_type == FrameType::I && !f.mv.is_empty() {
                return Err(NvcError::Encode(format!("record {i}: I-frame carries motion bytes")));
            }
            for part in [&f.mv, &f.ctx] {
                if u32::try_from(part.len()).is_err() {
                    return Err(NvcError::Encode(format!("record {i}: payload exceeds 4 GiB")));
                }
            }
            out.push(f.frame_type as u8);
            out.extend_from_slice(&(f.mv.len() as u32).to_le_bytes());
            out.extend_from_slice(&f.mv);
            out.extend_from_slice(&(f.ctx.len() as u32).to_le_bytes());
            out.extend_from_slice(&f.ctx);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = Header::from_bytes(bytes)?;
        let mut r = Reader { bytes, pos: HEADER_BYTES };
        let mut frames = Vec::with_capacity(usize::from(header.frame_count));
        for i in 0..usize::from(header.frame_count) {
            let frame_type = match r.take(1, "frame type", i)?[0] {
                0 => FrameType::I,
                1 => FrameType::P,
                other => return Err(NvcError::Bitstream(format!("record {i}: unknown frame type {other}"))),
            };
            if (frame_type == FrameType::I) != header.is_intra(i) {
                return Err(NvcError::Bitstream(format!(
                    "record {i}: frame type {frame_type:?} contradicts intra period {}",
                    header.intra_period
                )));
            }
            let mv_len = r.u32("motion length", i)?;
            if frame_type == FrameType::I && mv_len != 0 {
                return Err(NvcError::Bitstream(format!("record {i}: I-frame with {mv_len} motion bytes")));
            }
            let mv = r.take(mv_len, "motion payload", i)?.to_vec();
            let ctx_len = r.u32("frame length", i)?;
            let ctx = r.take(ctx_len, "frame payload", i)?.to_vec();
            frames.push(FrameRecord { frame_type, mv, ctx });
        }
        if r.pos != bytes.len() {
            return Err(NvcError::Bitstream(format!("{} trailing bytes after the last record", bytes.len() - r.pos)));
        }
        Ok(Self { header, frames })
    }

    pub fn total_bytes(&self) -> usize {
        HEADER_BYTES + self.frames.iter().map(FrameRecord::coded_bytes).sum::<usize>()
    }
}
