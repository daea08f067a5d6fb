//! TOML run configuration: `[rate]`, `[model]` and `[trainer]` tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NvcError, Result};
use crate::rate_control::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature channels at full, 1/2 and 1/4 resolution.
    pub feat_channels: [usize; 3],
    pub mv_latent: usize,
    pub ctx_latent: usize,
    pub intra_latent: usize,
    /// Hidden width of the flow refiners and motion codec.
    pub flow_hidden: usize,
    /// Hidden width of the frame autoencoders.
    pub coder_hidden: usize,
    pub max_displacement: f64,
    /// Symbol support `[-L, L]` for every latent.
    pub support: i32,
    /// Long-term branch of the context fusion; off for the short-term-only ablation.
    pub long_term: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feat_channels: [32, 64, 96],
            mv_latent: 64,
            ctx_latent: 96,
            intra_latent: 96,
            flow_hidden: 32,
            coder_hidden: 96,
            max_displacement: 32.0,
            support: 64,
            long_term: true,
        }
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            feat_channels: [8, 12, 16],
            mv_latent: 8,
            ctx_latent: 16,
            intra_latent: 16,
            flow_hidden: 12,
            coder_hidden: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.mv_latent, self.ctx_latent, self.intra_latent, self.flow_hidden, self.coder_hidden];
        if self.feat_channels.iter().chain(&widths).any(|&c| c == 0) {
            return Err(NvcError::Config("model widths must be positive".into()));
        }
        if !(self.max_displacement > 0.0 && self.max_displacement.is_finite()) {
            return Err(NvcError::Config("model.max_displacement must be positive".into()));
        }
        if !(1..=1024).contains(&self.support) {
            return Err(NvcError::Config(format!("model.support must be in 1..=1024, got {}", self.support)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub epochs_per_stage: usize,
    /// Multiplies every stage learning rate.
    pub lr_scale: f64,
    /// Factor applied to MSE before it meets lambda (255^2 puts distortion
    /// on the 8-bit scale).
    pub distortion_scale: f64,
    /// Synthetic clips generated when no dataset folder is given.
    pub synthetic_clips: usize,
    pub clip_frames: usize,
    pub crop: usize,
    pub seed: u64,
    /// Piecewise sampler; false draws rate indices uniformly.
    pub pls: bool,
    pub mixed_precision: bool,
    /// Caps optimizer steps per stage when set.
    pub max_steps: Option<usize>,
    /// Rounds latents with a straight-through gradient instead of adding
    /// uniform noise.
    pub straight_through: bool,
    pub grad_clip: Option<f64>,
    pub data: Option<PathBuf>,
    /// Single-frame steps that train the intra codec alone before stage 1,
    /// standing in for an imported pretrained I-frame model.
    pub intra_warmup_steps: usize,
    pub intra_warmup_lr: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs_per_stage: 20,
            lr_scale: 1.0,
            distortion_scale: 255.0 * 255.0,
            synthetic_clips: 256,
            clip_frames: 7,
            crop: 256,
            seed: 0,
            pls: true,
            mixed_precision: false,
            max_steps: None,
            straight_through: false,
            grad_clip: None,
            data: None,
            intra_warmup_steps: 0,
            intra_warmup_lr: 2e-3,
        }
    }
}

impl TrainerConfig {
    pub fn desk() -> Self {
        Self {
            epochs_per_stage: 2,
            lr_scale: 20.0,
            synthetic_clips: 24,
            crop: 64,
            grad_clip: Some(1.0),
            intra_warmup_steps: 3000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_stage == 0 || self.synthetic_clips == 0 {
            return Err(NvcError::Config("trainer epochs and clip count must be positive".into()));
        }
        if !(self.lr_scale > 0.0 && self.distortion_scale > 0.0 && self.intra_warmup_lr > 0.0) {
            return Err(NvcError::Config(
                "trainer.lr_scale, distortion_scale and intra_warmup_lr must be positive".into(),
            ));
        }
        if self.clip_frames < 6 {
            return Err(NvcError::Config("trainer.clip_frames must be at least 6".into()));
        }
        if self.crop == 0 || !self.crop.is_multiple_of(crate::data_io::FRAME_ALIGN) {
            return Err(NvcError::Config(format!("trainer.crop must be a multiple of 64, got {}", self.crop)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub rate: SamplerConfig,
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
}

impl Config {
    /// Small widths, 64x64 crops and two epochs per stage.
    pub fn desk() -> Self {
        Self { rate: SamplerConfig::default(), model: ModelConfig::desk(), trainer: TrainerConfig::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        self.model.validate()?;
        self.trainer.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| NvcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overlays a TOML file on `base`: keys present in the file win.
    pub fn load_over(base: &Config, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NvcError::io(path.display(), e))?;
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| NvcError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| NvcError::Config(e.to_string()))?;
        for (section, value) in overlay {
            match (merged.get_mut(&section), value) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => dst.extend(src),
                (_, value) => {
                    merged.insert(section, value);
                }
            }
        }
        let cfg: Config = merged.try_into().map_err(|e: toml::de::Error| NvcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| NvcError::Config(e.to_string()))
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(json))
    }
}
