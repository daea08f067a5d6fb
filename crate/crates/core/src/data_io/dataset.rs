use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::synth::{synth_clip, SynthRecipe};
use super::Frame;
use crate::error::{NvcError, Result};

/// Same crop window across every frame of a clip.
pub fn random_crop<R: Rng + ?Sized>(clip: &[Frame], size: usize, rng: &mut R) -> Result<Vec<Frame>> {
    let first = clip.first().ok_or_else(|| NvcError::Data("empty clip".into()))?;
    if size == 0 || size > first.width || size > first.height {
        return Err(NvcError::Data(format!("crop size {size} does not fit a {}x{} clip", first.width, first.height)));
    }
    if clip.iter().any(|f| f.width != first.width || f.height != first.height) {
        return Err(NvcError::Data("clip frames differ in size".into()));
    }
    let x0 = rng.gen_range(0..=first.width - size);
    let y0 = rng.gen_range(0..=first.height - size);
    clip.iter().map(|f| f.crop(x0, y0, size, size)).collect()
}

pub fn load_image(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| NvcError::Data(format!("{}: {e}", path.display())))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut f = Frame::filled(w, h, 0.0);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            f.set(c, y as usize, x as usize, f32::from(px[c]) / 255.0);
        }
    }
    Ok(f)
}

fn is_image(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(), Some("png"))
}

/// Image files of a folder in natural (numeric-aware) order.
fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| NvcError::io(dir.display(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
        (digits.parse::<u64>().unwrap_or(u64::MAX), stem)
    };
    files.sort_by_key(key);
    Ok(files)
}

pub fn load_image_folder(dir: &Path) -> Result<Vec<Frame>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(NvcError::Data(format!("no images under {}", dir.display())));
    }
    files.iter().map(|p| load_image(p)).collect()
}

#[derive(Debug, Clone)]
pub enum ClipSource {
    InMemory(Vec<Frame>),
    Files(Vec<PathBuf>),
}

/// Training clips, each cropped to `crop x crop` when drawn.
#[derive(Debug, Clone)]
pub struct Dataset {
    clips: Vec<ClipSource>,
    crop: usize,
}

impl Dataset {
    pub fn new(crop: usize) -> Self {
        Self { clips: Vec::new(), crop }
    }

    pub fn crop(&self) -> usize {
        self.crop
    }

    pub fn push(&mut self, clip: ClipSource) {
        self.clips.push(clip);
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Mixture of pans (60%), moving rectangles (25%) and noisy static
    /// scenes (15%), rendered at `crop x crop`.
    pub fn synthetic<R: Rng + ?Sized>(count: usize, frames: usize, crop: usize, rng: &mut R) -> Result<Self> {
        let mut ds = Self::new(crop);
        for _ in 0..count {
            let u: f64 = rng.gen();
            let recipe = if u < 0.6 {
                SynthRecipe::Translation { vx: rng.gen_range(-3.0..3.0), vy: rng.gen_range(-3.0..3.0) }
            } else if u < 0.85 {
                let side = (crop / 3).max(1);
                SynthRecipe::MovingRect {
                    vx: rng.gen_range(-3.0..3.0),
                    vy: rng.gen_range(-3.0..3.0),
                    rect_w: side,
                    rect_h: side,
                }
            } else {
                SynthRecipe::Static { noise_sigma: 0.02 }
            };
            ds.push(ClipSource::InMemory(synth_clip(recipe, frames, crop, crop, rng)?.frames));
        }
        Ok(ds)
    }

    /// Septuplet layout: `root/<sequence>/<clip>/im1.png .. im7.png`.
    pub fn septuplet(root: &Path, crop: usize) -> Result<Self> {
        let mut ds = Self::new(crop);
        let mut seqs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(|e| NvcError::io(root.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        seqs.sort();
        for seq in seqs {
            let mut clips: Vec<PathBuf> = fs::read_dir(&seq)
                .map_err(|e| NvcError::io(seq.display(), e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            clips.sort();
            for clip in clips {
                let files = image_files(&clip)?;
                if files.len() >= 2 {
                    ds.push(ClipSource::Files(files));
                }
            }
        }
        if ds.is_empty() {
            return Err(NvcError::Data(format!("no septuplet clips under {}", root.display())));
        }
        Ok(ds)
    }

    pub fn extend(&mut self, other: Dataset) {
        self.clips.extend(other.clips);
    }

    /// First `frames` frames of clip `i`, randomly cropped.
    pub fn clip<R: Rng + ?Sized>(&self, i: usize, frames: usize, rng: &mut R) -> Result<Vec<Frame>> {
        let source = self.clips.get(i).ok_or_else(|| NvcError::Data(format!("clip index {i} out of range")))?;
        let available = match source {
            ClipSource::InMemory(f) => f.len(),
            ClipSource::Files(p) => p.len(),
        };
        if available < frames {
            return Err(NvcError::Data(format!("clip {i} has {available} frames, stage needs {frames}")));
        }
        let loaded = match source {
            ClipSource::InMemory(f) => f[..frames].to_vec(),
            ClipSource::Files(p) => p[..frames].iter().map(|p| load_image(p)).collect::<Result<_>>()?,
        };
        random_crop(&loaded, self.crop, rng)
    }
}
