//! Procedural clips with known motion, used for desk-scale training and as
//! oracles for the motion tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, MotionField};
use crate::error::{NvcError, Result};

/// Multi-octave value noise defined on the whole plane, so any integer
/// shift of the sampling window reproduces pixels exactly.
#[derive(Debug, Clone)]
pub struct Texture {
    seed: u64,
    base: [f64; 3],
}

const OCTAVES: [(f64, f64); 3] = [(16.0, 0.55), (8.0, 0.3), (4.0, 0.15)];

fn hash01(x: i64, y: i64, seed: u64) -> f64 {
    let mut z = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (x0, y0) = (gx.floor(), gy.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(gx - x0), smooth(gy - y0));
    let (xi, yi) = (x0 as i64, y0 as i64);
    let a = hash01(xi, yi, seed);
    let b = hash01(xi + 1, yi, seed);
    let c = hash01(xi, yi + 1, seed);
    let d = hash01(xi + 1, yi + 1, seed);
    (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty
}

impl Texture {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { seed: rng.gen(), base: [rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7)] }
    }

    fn octaves(&self, x: f64, y: f64, seed: u64) -> f64 {
        OCTAVES
            .iter()
            .enumerate()
            .map(|(k, &(cell, amp))| amp * value_noise(x, y, cell, seed.wrapping_add(k as u64 * 7919)))
            .sum()
    }

    pub fn sample(&self, c: usize, x: f64, y: f64) -> f32 {
        let luma = self.octaves(x, y, self.seed);
        let tint = self.octaves(x, y, self.seed ^ (0x5151 + c as u64));
        (self.base[c] + 0.8 * (luma - 0.5) + 0.25 * (tint - 0.5)).clamp(0.0, 1.0) as f32
    }

    /// Frame whose pixel (x, y) is the texture at (x + ox, y + oy).
    pub fn render(&self, width: usize, height: usize, ox: f64, oy: f64) -> Frame {
        let mut f = Frame::filled(width, height, 0.0);
        for c in 0..Frame::CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    f.set(c, y, x, self.sample(c, x as f64 + ox, y as f64 + oy));
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthRecipe {
    /// Camera pan: frame t samples the background at offset `t * (vx, vy)`,
    /// so the backward flow is `(vx, vy)` everywhere.
    Translation { vx: f64, vy: f64 },
    /// Fixed background plus independent Gaussian noise per frame.
    Static { noise_sigma: f64 },
    /// A textured rectangle moving by `(vx, vy)` pixels per frame over a
    /// static background; backward flow is `(-vx, -vy)` on the rectangle.
    MovingRect { vx: f64, vy: f64, rect_w: usize, rect_h: usize },
}

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub frames: Vec<Frame>,
    /// `motion[t]` maps frame t onto frame t-1; `motion[0]` is zero.
    pub motion: Vec<MotionField>,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn synth_clip<R: Rng + ?Sized>(
    recipe: SynthRecipe,
    frames: usize,
    width: usize,
    height: usize,
    rng: &mut R,
) -> Result<SyntheticClip> {
    if frames == 0 || width == 0 || height == 0 {
        return Err(NvcError::Argument("synthetic clip needs positive size".into()));
    }
    let background = Texture::random(rng);
    let zero = MotionField::constant(width, height, 0.0, 0.0);
    match recipe {
        SynthRecipe::Translation { vx, vy } => {
            let frames_v =
                (0..frames).map(|t| background.render(width, height, vx * t as f64, vy * t as f64)).collect();
            let mut motion = vec![zero];
            motion.extend((1..frames).map(|_| MotionField::constant(width, height, vx as f32, vy as f32)));
            Ok(SyntheticClip { frames: frames_v, motion })
        }
        SynthRecipe::Static { noise_sigma } => {
            let base = background.render(width, height, 0.0, 0.0);
            let frames_v = (0..frames)
                .map(|_| {
                    let mut f = base.clone();
                    if noise_sigma > 0.0 {
                        for v in &mut f.data {
                            *v = (f64::from(*v) + noise_sigma * gaussian(rng)).clamp(0.0, 1.0) as f32;
                        }
                    }
                    f
                })
                .collect();
            Ok(SyntheticClip { frames: frames_v, motion: vec![zero; frames] })
        }
        SynthRecipe::MovingRect { vx, vy, rect_w, rect_h } => {
            if rect_w == 0 || rect_h == 0 || rect_w > width || rect_h > height {
                return Err(NvcError::Argument(format!(
                    "rectangle {rect_w}x{rect_h} does not fit a {width}x{height} frame"
                )));
            }
            let object = Texture::random(rng);
            let x0 = rng.gen_range(0.0..=(width - rect_w) as f64);
            let y0 = rng.gen_range(0.0..=(height - rect_h) as f64);
            let base = background.render(width, height, 0.0, 0.0);
            let mut frames_v = Vec::with_capacity(frames);
            let mut motion = Vec::with_capacity(frames);
            for t in 0..frames {
                let (px, py) = (x0 + vx * t as f64, y0 + vy * t as f64);
                let mut f = base.clone();
                let mut m = zero.clone();
                for y in 0..height {
                    for x in 0..width {
                        let (rx, ry) = (x as f64 - px, y as f64 - py);
                        if rx >= 0.0 && ry >= 0.0 && rx < rect_w as f64 && ry < rect_h as f64 {
                            for c in 0..Frame::CHANNELS {
                                f.set(c, y, x, object.sample(c, rx + 1000.0, ry + 1000.0));
                            }
                            if t > 0 {
                                m.dx[y * width + x] = -vx as f32;
                                m.dy[y * width + x] = -vy as f32;
                            }
                        }
                    }
                }
                frames_v.push(f);
                motion.push(m);
            }
            Ok(SyntheticClip { frames: frames_v, motion })
        }
    }
}
