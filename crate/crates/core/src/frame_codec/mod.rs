//! Conditional inter-frame coding with long/short-term context fusion, plus
//! the intra codec that starts every sequence.

mod coder;
mod lstffm;
mod model;

pub use coder::{CoderTrainOutput, ConditionalCoder, IntraCodec, RefFeatureHead};
pub use lstffm::Lstffm;
pub use model::{InterCoded, InterMode, InterTrain, IntraCoded, IntraTrain, VideoModel};

use std::collections::VecDeque;

use candle_core::Tensor;

use crate::error::{NvcError, Result};

/// Decoded frames needed by the long-term reference rule: the intra frame
/// plus the four most recent frames, keyed by frame index.
#[derive(Debug, Clone)]
pub struct FrameRing<T> {
    intra: Option<T>,
    recent: VecDeque<(usize, T)>,
}

impl<T: Clone> Default for FrameRing<T> {
    fn default() -> Self {
        Self { intra: None, recent: VecDeque::with_capacity(Self::DEPTH) }
    }
}

impl<T: Clone> FrameRing<T> {
    pub const DEPTH: usize = 4;

    /// Ring holding only `x̂_0`.
    pub fn start(x0: T) -> Self {
        let mut ring = Self::default();
        ring.push(0, x0);
        ring
    }

    /// Records decoded frame `t`; frame 0 also becomes the intra reference.
    pub fn push(&mut self, t: usize, frame: T) {
        if t == 0 {
            self.intra = Some(frame.clone());
            self.recent.clear();
        }
        if self.recent.len() == Self::DEPTH {
            self.recent.pop_front();
        }
        self.recent.push_back((t, frame));
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn latest(&self) -> Option<&T> {
        self.recent.back().map(|(_, f)| f)
    }

    pub fn get(&self, t: usize) -> Option<&T> {
        self.recent.iter().find(|(i, _)| *i == t).map(|(_, f)| f)
    }

    /// Long-term reference for coding frame `t`: `x̂_0` while `t < 4`,
    /// otherwise `x̂_{t-4}`.
    pub fn long_term_ref(&self, t: usize) -> Result<&T> {
        if t == 0 {
            return Err(NvcError::Argument("frame 0 has no temporal reference".into()));
        }
        let intra = self.intra.as_ref().ok_or_else(|| NvcError::State("no decoded intra frame".into()))?;
        if t < 4 {
            return Ok(intra);
        }
        self.get(t - 4).ok_or_else(|| NvcError::State(format!("frame {} is no longer buffered for frame {t}", t - 4)))
    }
}

/// Rolling decoder state between frames.
#[derive(Debug, Clone)]
pub struct DecodedState {
    /// Feature buffer at full, 1/2 and 1/4 resolution.
    pub feat: [Tensor; 3],
    pub ring: FrameRing<Tensor>,
    /// Index of the next frame to code.
    pub t: usize,
}

impl DecodedState {
    pub fn new(x0: Tensor, feat: [Tensor; 3]) -> Self {
        Self { feat, ring: FrameRing::start(x0), t: 1 }
    }

    /// Previously decoded frame.
    pub fn prev(&self) -> Result<&Tensor> {
        self.ring.latest().ok_or_else(|| NvcError::State("decoder state holds no frame".into()))
    }

    pub fn long_term_ref(&self) -> Result<&Tensor> {
        self.ring.long_term_ref(self.t)
    }

    /// Advances past a decoded frame.
    pub fn advance(&mut self, x_hat: Tensor, feat: [Tensor; 3]) {
        self.ring.push(self.t, x_hat);
        self.feat = feat;
        self.t += 1;
    }
}

/// Conditioning features `c_t` at full, 1/2 and 1/4 resolution.
#[derive(Debug, Clone)]
pub struct ContextFeatures {
    pub scales: [Tensor; 3],
}

/// Quantised frame latent: `(1, C, H/16, W/16)` symbols and their modelled
/// cost in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct CtxLatent {
    pub symbols: Vec<i32>,
    pub shape: [usize; 4],
    pub bits: f64,
}

impl CtxLatent {
    pub fn bpp(&self) -> f64 {
        self.bits / (self.shape[2] * self.shape[3] * 256) as f64
    }
}
