//! Multi-stage training over the fixed 18-row schedule.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, TrainerConfig};
use crate::data_io::Dataset;
use crate::entropy_coding::QuantMode;
use crate::error::{NvcError, Result};
use crate::frame_codec::{InterMode, VideoModel};
use crate::losses::{loss_avg, mse_tensor, LossBreakdown, LossType};
use crate::motion::warp;
use crate::rate_control::{sample_idx, sample_idx_uniform};

pub const DEFAULT_EPOCHS: usize = 20;
pub const NUM_STAGES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentType {
    #[serde(rename = "IP")]
    Ip,
    #[serde(rename = "PP")]
    Pp,
    #[serde(rename = "IPP")]
    Ipp,
}

impl fmt::Display for SegmentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentType::Ip => "IP",
            SegmentType::Pp => "PP",
            SegmentType::Ipp => "IPP",
        })
    }
}

impl FromStr for SegmentType {
    type Err = NvcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IP" => Ok(SegmentType::Ip),
            "PP" => Ok(SegmentType::Pp),
            "IPP" => Ok(SegmentType::Ipp),
            other => Err(NvcError::Config(format!("unknown segment type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    MotionAll,
    NonMotion,
}

/// One schedule row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub id: usize,
    pub loss_type: LossType,
    pub frames: usize,
    pub lr: f64,
    pub segment_type: SegmentType,
    pub frozen_groups: Vec<ParamGroup>,
    pub epochs: usize,
}

impl StageConfig {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.frozen_groups.contains(&group)
    }

    /// The intra coder trains in every IP stage, even while the rest of the
    /// non-motion group is frozen.
    pub fn trains_intra(&self) -> bool {
        self.segment_type == SegmentType::Ip || !self.is_frozen(ParamGroup::NonMotion)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        let group = ParamGroups::group_of(name);
        !self.is_frozen(group) || (ParamGroups::is_intra(name) && self.trains_intra())
    }

    /// Indices of the frames whose loss is penalized.
    pub fn penalized_frames(&self) -> Vec<usize> {
        match self.segment_type {
            SegmentType::Ip => vec![1],
            SegmentType::Pp => (2..self.frames).collect(),
            SegmentType::Ipp => (1..self.frames).collect(),
        }
    }
}

/// The 18 stages with `epochs` passes each.
pub fn schedule(epochs: usize) -> Vec<StageConfig> {
    use LossType::*;
    use SegmentType::*;
    let rows: [(LossType, usize, f64, SegmentType); NUM_STAGES] = [
        (MeD, 2, 1e-4, Ip),
        (MeRd, 2, 1e-4, Ip),
        (RecD, 2, 5e-5, Ip),
        (MeRd, 3, 1e-4, Pp),
        (RecD, 3, 5e-5, Pp),
        (RecD, 4, 5e-5, Pp),
        (RecD, 6, 5e-5, Pp),
        (RecRd, 2, 5e-5, Ip),
        (RecRd, 3, 5e-5, Pp),
        (RecRd, 4, 5e-5, Pp),
        (RecRd, 6, 5e-5, Pp),
        (All, 2, 5e-5, Ip),
        (All, 3, 5e-5, Pp),
        (All, 4, 5e-5, Pp),
        (All, 6, 5e-5, Pp),
        (All, 6, 1e-5, Pp),
        (All, 6, 5e-6, Pp),
        (Avg, 6, 1e-5, Ipp),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(loss_type, frames, lr, segment_type))| {
            let id = i + 1;
            let frozen_groups = match id {
                1..=4 => vec![ParamGroup::NonMotion],
                5..=11 => vec![ParamGroup::MotionAll],
                _ => Vec::new(),
            };
            StageConfig { id, loss_type, frames, lr, segment_type, frozen_groups, epochs }
        })
        .collect()
}

pub fn default_schedule() -> Vec<StageConfig> {
    schedule(DEFAULT_EPOCHS)
}

/// Stages `start..=end` of `schedule`, 1-based.
pub fn select_stages(schedule: &[StageConfig], start: usize, end: usize) -> Result<Vec<StageConfig>> {
    if start < 1 || end > schedule.len() || start > end {
        return Err(NvcError::Argument(format!("stage range {start}..={end} is not within 1..={}", schedule.len())));
    }
    Ok(schedule[start - 1..end].to_vec())
}

/// Partition of parameter names into the motion and non-motion groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroups {
    pub motion: Vec<String>,
    pub non_motion: Vec<String>,
}

impl ParamGroups {
    pub const MOTION_PREFIXES: [&'static str; 3] = ["flow_net.", "mv_codec.", "mv_entropy."];

    pub fn group_of(name: &str) -> ParamGroup {
        if Self::MOTION_PREFIXES.iter().any(|p| name.starts_with(p)) {
            ParamGroup::MotionAll
        } else {
            ParamGroup::NonMotion
        }
    }

    pub fn is_intra(name: &str) -> bool {
        name.starts_with("intra.")
    }

    pub fn of(model: &VideoModel) -> Self {
        let (motion, non_motion) =
            model.store().names().map(str::to_string).partition(|n| Self::group_of(n) == ParamGroup::MotionAll);
        Self { motion, non_motion }
    }
}

/// One training sample: a clip prefix sharing a single rate index.
#[derive(Debug, Clone)]
pub struct Instance {
    pub idx: usize,
    pub lambda: f64,
    pub frames: Vec<Tensor>,
    pub penalized: Vec<usize>,
}

pub fn build_batch(
    model: &VideoModel,
    dataset: &Dataset,
    clip: usize,
    stage: &StageConfig,
    pls: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Instance> {
    let rate = model.rate_config();
    let idx = if pls { sample_idx(rate, rng)? } else { sample_idx_uniform(rate, rng)? };
    let frames = dataset
        .clip(clip, stage.frames, rng)?
        .iter()
        .map(|f| f.to_tensor(model.device(), model.dtype()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance { idx, lambda: model.lambda(idx)?, frames, penalized: stage.penalized_frames() })
}

/// Differentiable objective of one instance plus its logged breakdown.
pub struct InstanceLoss {
    pub total: Tensor,
    pub breakdown: LossBreakdown,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Rolls the instance out: intra frame, then recurrent P-frames. Distortion
/// enters the objective multiplied by `distortion_scale`. IP stages add the
/// intra frame's RD cost. In motion stages the flow estimator learns only from
/// an added term: the warping error of its flow between consecutive source
/// frames.
pub fn instance_loss(
    model: &VideoModel,
    inst: &Instance,
    stage: &StageConfig,
    distortion_scale: f64,
    mode: QuantMode,
    rng: &mut ChaCha8Rng,
) -> Result<InstanceLoss> {
    let (_, _, h, w) = inst.frames[0].dims4()?;
    let pixels = (h * w) as f64;
    let lambda = inst.lambda;
    let intra = model.intra_train(&inst.frames[0], inst.idx, mode, rng)?;
    let mut state = model.start_state(&intra.x_hat)?;
    let motion_only = stage.loss_type.is_motion_only();
    let motion_stage = stage.is_frozen(ParamGroup::NonMotion);
    let mut aux = Vec::new();
    let mut per_frame = Vec::new();
    let (mut dist, mut bpp_mv, mut bpp_ctx) = (0.0, 0.0, 0.0);
    for (t, x) in inst.frames.iter().enumerate().skip(1) {
        let inter = InterMode { motion_only, detach_flow: motion_stage };
        let out = model.inter_train(x, &state, inst.idx, mode, inter, rng)?;
        if motion_stage {
            let src = &inst.frames[t - 1];
            let raw = warp(src, &model.flow_net.estimate_motion(x, src)?)?;
            aux.push(mse_tensor(x, &raw)?.affine(lambda * distortion_scale, 0.0)?);
        }
        if inst.penalized.contains(&t) {
            let target = if motion_only { &out.pred } else { &out.raw };
            let d = mse_tensor(x, target)?;
            let bm = out.bits_mv.affine(1.0 / pixels, 0.0)?;
            let bc = out.bits_ctx.affine(1.0 / pixels, 0.0)?;
            dist += scalar(&d)?;
            bpp_mv += scalar(&bm)?;
            bpp_ctx += scalar(&bc)?;
            per_frame.push(stage.loss_type.frame_loss(&d.affine(distortion_scale, 0.0)?, &bm, &bc, lambda)?);
        }
        state = out.state;
    }
    if per_frame.is_empty() {
        return Err(NvcError::Training(format!("stage {} penalizes no frame", stage.id)));
    }
    let mut total = loss_avg(&per_frame)?;
    if !aux.is_empty() {
        total = (total + loss_avg(&aux)?)?;
    }
    if stage.segment_type == SegmentType::Ip {
        let d = mse_tensor(&inst.frames[0], &intra.raw)?;
        let r = intra.bits.affine(1.0 / pixels, 0.0)?;
        total = (total + (d.affine(lambda * distortion_scale, 0.0)? + r)?)?;
    }
    let n = per_frame.len() as f64;
    let breakdown =
        LossBreakdown { distortion: dist / n, bpp_mv: bpp_mv / n, bpp_context: bpp_ctx / n, total: scalar(&total)? };
    Ok(InstanceLoss { total, breakdown })
}

/// Summary written into each stage manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub steps: usize,
    pub skipped_steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub mean_loss: f64,
    pub first_epoch_mean: f64,
    pub last_epoch_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: usize,
    pub step: usize,
    pub seed: u64,
    pub config_hash: String,
    pub loss_type: LossType,
    pub metrics: StageMetrics,
    pub config: Config,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: StageConfig,
    /// Objective per optimizer step.
    pub losses: Vec<f64>,
    pub history: Vec<LossBreakdown>,
    pub metrics: StageMetrics,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Serialize)]
struct LogRow<'a> {
    stage: usize,
    step: usize,
    idx: usize,
    lambda: f64,
    distortion: f64,
    bpp_mv: f64,
    bpp_context: f64,
    total: f64,
    loss_type: &'a str,
}

pub fn checkpoint_dir(out_dir: &Path, stage: usize) -> PathBuf {
    out_dir.join("ckpt").join(format!("stage{stage:02}"))
}

pub fn build_model(cfg: &Config) -> Result<VideoModel> {
    VideoModel::new(&cfg.model, &cfg.rate, cfg.trainer.seed, DType::F32, &Device::Cpu)
}

/// Synthetic clips from the trainer seed, plus a septuplet folder if set.
pub fn build_dataset(cfg: &TrainerConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut ds = Dataset::synthetic(cfg.synthetic_clips, cfg.clip_frames, cfg.crop, &mut rng)?;
    if let Some(root) = &cfg.data {
        ds.extend(Dataset::septuplet(root, cfg.crop)?);
    }
    Ok(ds)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| NvcError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| NvcError::Model(format!("{}: {e}", path.display())))
}

/// Model and manifest from a `ckpt/stageNN` directory.
pub fn load_checkpoint(dir: &Path) -> Result<(VideoModel, Manifest)> {
    let manifest = read_manifest(dir)?;
    manifest.config.validate()?;
    let mut model = build_model(&manifest.config)?;
    model.store_mut().load(&dir.join("params.bin"))?;
    Ok((model, manifest))
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn finite_grads(vars: &[Var], grads: &GradStore) -> Result<bool> {
    for v in vars {
        if let Some(g) = grads.get(v) {
            let s = g.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !s.is_finite() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Multiplies every gradient by `k` and rescales further so the global
/// norm is at most `clip`.
fn rescale_grads(vars: &[Var], grads: &mut GradStore, k: f64, clip: Option<f64>) -> Result<()> {
    let mut factor = k;
    if let Some(c) = clip {
        let mut sq = 0.0;
        for v in vars {
            if let Some(g) = grads.get(v) {
                sq += g.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt() * k;
        if norm > c {
            factor *= c / norm;
        }
    }
    if factor != 1.0 {
        for v in vars {
            if let Some(g) = grads.remove(v) {
                grads.insert(v, g.affine(factor, 0.0)?);
            }
        }
    }
    Ok(())
}

/// Where a stage writes its checkpoint and log rows.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub verbose: bool,
}

fn write_diagnostic(
    dir: Option<&Path>,
    stage: usize,
    step: usize,
    inst: &Instance,
    b: &LossBreakdown,
) -> Result<String> {
    let diag = serde_json::json!({
        "stage": stage,
        "step": step,
        "idx": inst.idx,
        "lambda": inst.lambda,
        "distortion": b.distortion,
        "bpp_mv": b.bpp_mv,
        "bpp_context": b.bpp_context,
        "total": b.total,
    });
    match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| NvcError::io(d.display(), e))?;
            let path = d.join("diagnostic.json");
            fs::write(&path, serde_json::to_string_pretty(&diag).unwrap_or_default())
                .map_err(|e| NvcError::io(path.display(), e))?;
            Ok(path.display().to_string())
        }
        None => Ok(diag.to_string()),
    }
}

pub fn run_stage(
    model: &mut VideoModel,
    dataset: &Dataset,
    stage: &StageConfig,
    cfg: &Config,
    opts: &RunOptions,
) -> Result<StageReport> {
    if dataset.is_empty() {
        return Err(NvcError::Data("training dataset is empty".into()));
    }
    let tc = &cfg.trainer;
    let trainable: Vec<Var> = model.store().select(|n| stage.is_trainable(n));
    let params = ParamsAdamW { lr: stage.lr * tc.lr_scale, weight_decay: 0.0, ..Default::default() };
    let mut opt = AdamW::new(trainable.clone(), params)?;
    let mode = if tc.straight_through { QuantMode::StraightThrough } else { QuantMode::Noise };
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(tc.seed, stage.id));
    let total_steps = {
        let full = stage.epochs * dataset.len();
        tc.max_steps.map_or(full, |m| m.min(full))
    };
    let ckpt = opts.out_dir.as_ref().map(|d| checkpoint_dir(d, stage.id));
    let mut log = match &opts.out_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| NvcError::io(d.display(), e))?;
            let path = d.join("train_log.csv");
            let fresh = !path.exists();
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| NvcError::io(path.display(), e))?;
            Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))
        }
        None => None,
    };
    model.store().set_half_precision(tc.mixed_precision);
    let mut loss_scale = 1.0;
    let mut good_steps = 0usize;
    let mut losses = Vec::with_capacity(total_steps);
    let mut history = Vec::with_capacity(total_steps);
    let mut skipped = 0usize;
    let mut order: Vec<usize> = Vec::new();
    for step in 0..total_steps {
        if step % dataset.len() == 0 {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
        }
        let inst = build_batch(model, dataset, order[step % dataset.len()], stage, tc.pls, &mut rng)?;
        let out = instance_loss(model, &inst, stage, tc.distortion_scale, mode, &mut rng)?;
        let b = out.breakdown;
        if !b.total.is_finite() && !tc.mixed_precision {
            let where_ = write_diagnostic(ckpt.as_deref(), stage.id, step, &inst, &b)?;
            return Err(NvcError::Training(format!(
                "non-finite loss at stage {} step {step}; diagnostic: {where_}",
                stage.id
            )));
        }
        let mut grads = out.total.affine(loss_scale, 0.0)?.backward()?;
        if tc.mixed_precision && (!b.total.is_finite() || !finite_grads(&trainable, &grads)?) {
            loss_scale /= 2.0;
            good_steps = 0;
            skipped += 1;
            if loss_scale < 1e-4 {
                return Err(NvcError::Training(format!("loss scale underflow at stage {} step {step}", stage.id)));
            }
            continue;
        }
        rescale_grads(&trainable, &mut grads, 1.0 / loss_scale, tc.grad_clip)?;
        opt.step(&grads)?;
        if tc.mixed_precision {
            good_steps += 1;
            if good_steps.is_multiple_of(200) {
                loss_scale *= 2.0;
            }
        }
        losses.push(b.total);
        history.push(b);
        if let Some(w) = log.as_mut() {
            w.serialize(LogRow {
                stage: stage.id,
                step,
                idx: inst.idx,
                lambda: inst.lambda,
                distortion: b.distortion,
                bpp_mv: b.bpp_mv,
                bpp_context: b.bpp_context,
                total: b.total,
                loss_type: stage.loss_type.name(),
            })
            .map_err(|e| NvcError::Io(format!("train_log.csv: {e}")))?;
        }
        if opts.verbose && (step + 1) % 25 == 0 {
            eprintln!("stage {:2} step {:4}/{total_steps} loss {:.4}", stage.id, step + 1, b.total);
        }
    }
    model.store().set_half_precision(false);
    if let Some(w) = log.as_mut() {
        w.flush().map_err(|e| NvcError::Io(format!("train_log.csv: {e}")))?;
    }
    if losses.is_empty() {
        return Err(NvcError::Training(format!("stage {} made no optimizer step", stage.id)));
    }
    let per_epoch = dataset.len().min(losses.len());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let metrics = StageMetrics {
        steps: losses.len(),
        skipped_steps: skipped,
        first_loss: losses[0],
        last_loss: losses[losses.len() - 1],
        mean_loss: mean(&losses),
        first_epoch_mean: mean(&losses[..per_epoch]),
        last_epoch_mean: mean(&losses[losses.len() - per_epoch..]),
    };
    if let Some(dir) = &ckpt {
        fs::create_dir_all(dir).map_err(|e| NvcError::io(dir.display(), e))?;
        model.store().save(&dir.join("params.bin"))?;
        let manifest = Manifest {
            stage: stage.id,
            step: metrics.steps,
            seed: tc.seed,
            config_hash: cfg.hash(),
            loss_type: stage.loss_type,
            metrics: metrics.clone(),
            config: cfg.clone(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| NvcError::Io(e.to_string()))?;
        fs::write(&path, text).map_err(|e| NvcError::io(path.display(), e))?;
    }
    Ok(StageReport { stage: stage.clone(), losses, history, metrics, checkpoint: ckpt })
}

/// Trains the intra codec alone on single frames, at rate indices drawn like
/// the stages draw theirs. Returns the per-step losses.
pub fn pretrain_intra(model: &mut VideoModel, dataset: &Dataset, cfg: &Config, opts: &RunOptions) -> Result<Vec<f64>> {
    let tc = &cfg.trainer;
    if tc.intra_warmup_steps == 0 {
        return Ok(Vec::new());
    }
    if dataset.is_empty() {
        return Err(NvcError::Data("training dataset is empty".into()));
    }
    let trainable = model.store().select(ParamGroups::is_intra);
    let params = ParamsAdamW { lr: tc.intra_warmup_lr, weight_decay: 0.0, ..Default::default() };
    let mut opt = AdamW::new(trainable.clone(), params)?;
    let mode = if tc.straight_through { QuantMode::StraightThrough } else { QuantMode::Noise };
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(tc.seed, 0));
    let mut losses = Vec::with_capacity(tc.intra_warmup_steps);
    for step in 0..tc.intra_warmup_steps {
        let rate = model.rate_config();
        let idx = if tc.pls { sample_idx(rate, &mut rng)? } else { sample_idx_uniform(rate, &mut rng)? };
        let lambda = model.lambda(idx)?;
        let clip = rng.gen_range(0..dataset.len());
        let frame = dataset.clip(clip, 1, &mut rng)?[0].to_tensor(model.device(), model.dtype())?;
        let (_, _, h, w) = frame.dims4()?;
        let pixels = (h * w) as f64;
        let out = model.intra_train(&frame, idx, mode, &mut rng)?;
        let d = mse_tensor(&frame, &out.raw)?;
        let total = (d.affine(lambda * tc.distortion_scale, 0.0)? + out.bits.affine(1.0 / pixels, 0.0)?)?;
        let value = scalar(&total)?;
        if !value.is_finite() {
            return Err(NvcError::Training(format!("non-finite intra warm-up loss at step {step}")));
        }
        let mut grads = total.backward()?;
        rescale_grads(&trainable, &mut grads, 1.0, tc.grad_clip)?;
        opt.step(&grads)?;
        losses.push(value);
        if opts.verbose && (step + 1) % 500 == 0 {
            eprintln!("intra warm-up step {:5}/{} loss {value:.4}", step + 1, tc.intra_warmup_steps);
        }
    }
    Ok(losses)
}

/// Runs stages `start..=end` of the schedule for `cfg`, preceded by the intra
/// warm-up when starting at stage 1. A later start resumes from the previous
/// stage's checkpoint under `opts.out_dir`.
pub fn train_full(
    model: &mut VideoModel,
    dataset: &Dataset,
    cfg: &Config,
    start: usize,
    end: usize,
    opts: &RunOptions,
) -> Result<Vec<StageReport>> {
    let stages = select_stages(&schedule(cfg.trainer.epochs_per_stage), start, end)?;
    if start > 1 {
        let dir = opts
            .out_dir
            .as_ref()
            .map(|d| checkpoint_dir(d, start - 1))
            .ok_or_else(|| NvcError::Argument("resuming needs an output directory".into()))?;
        model.store_mut().load(&dir.join("params.bin"))?;
    } else {
        pretrain_intra(model, dataset, cfg, opts)?;
    }
    stages.iter().map(|s| run_stage(model, dataset, s, cfg, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_table() {
        let golden = [
            (1, "meD", 2, 1e-4, "IP"),
            (2, "meRD", 2, 1e-4, "IP"),
            (3, "recD", 2, 5e-5, "IP"),
            (4, "meRD", 3, 1e-4, "PP"),
            (5, "recD", 3, 5e-5, "PP"),
            (6, "recD", 4, 5e-5, "PP"),
            (7, "recD", 6, 5e-5, "PP"),
            (8, "recRD", 2, 5e-5, "IP"),
            (9, "recRD", 3, 5e-5, "PP"),
            (10, "recRD", 4, 5e-5, "PP"),
            (11, "recRD", 6, 5e-5, "PP"),
            (12, "all", 2, 5e-5, "IP"),
            (13, "all", 3, 5e-5, "PP"),
            (14, "all", 4, 5e-5, "PP"),
            (15, "all", 6, 5e-5, "PP"),
            (16, "all", 6, 1e-5, "PP"),
            (17, "all", 6, 5e-6, "PP"),
            (18, "avg", 6, 1e-5, "IPP"),
        ];
        let s = default_schedule();
        assert_eq!(s.len(), golden.len());
        for (row, &(id, loss, frames, lr, seg)) in s.iter().zip(&golden) {
            assert_eq!(row.id, id);
            assert_eq!(row.loss_type, loss.parse::<LossType>().unwrap());
            assert_eq!(row.frames, frames);
            assert_eq!(row.lr, lr);
            assert_eq!(row.segment_type, seg.parse::<SegmentType>().unwrap());
            assert_eq!(row.epochs, DEFAULT_EPOCHS);
            let expect = match id {
                1..=4 => vec![ParamGroup::NonMotion],
                5..=11 => vec![ParamGroup::MotionAll],
                _ => vec![],
            };
            assert_eq!(row.frozen_groups, expect, "stage {id}");
        }
    }

    #[test]
    fn penalized_frames_follow_segment_type() {
        let s = default_schedule();
        assert_eq!(s[0].penalized_frames(), vec![1]);
        assert_eq!(s[3].penalized_frames(), vec![2]);
        assert_eq!(s[6].penalized_frames(), vec![2, 3, 4, 5]);
        assert_eq!(s[17].penalized_frames(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn groups_partition_the_model() {
        let model = build_model(&Config::desk()).unwrap();
        let g = ParamGroups::of(&model);
        let total = model.store().names().count();
        assert_eq!(g.motion.len() + g.non_motion.len(), total);
        assert!(g.motion.iter().all(|n| !g.non_motion.contains(n)));
        assert!(g.motion.iter().any(|n| n.starts_with("flow_net.")));
        assert!(g.motion.contains(&"mv_entropy.log_scale".to_string()));
        assert!(g.non_motion.iter().any(|n| n.starts_with("context.lstffm.")));
        let s = default_schedule();
        assert!(s[0].is_trainable("intra.enc0.weight"));
        assert!(!s[0].is_trainable("context.coder.enc0.weight"));
        assert!(!s[4].is_trainable("flow_net.level0.0.weight"));
        assert!(!s[4].is_trainable("intra.enc0.weight") || s[4].trains_intra());
        assert!(s[12].is_trainable("flow_net.level0.0.weight"));
    }

    #[test]
    fn stage_ranges_are_checked() {
        let s = default_schedule();
        assert_eq!(select_stages(&s, 3, 5).unwrap().len(), 3);
        for (a, b) in [(0, 2), (3, 2), (1, 19)] {
            assert!(matches!(select_stages(&s, a, b), Err(NvcError::Argument(_))));
        }
    }

    fn tiny() -> Config {
        let mut cfg = Config::desk();
        cfg.trainer.synthetic_clips = 2;
        cfg.trainer.max_steps = Some(2);
        cfg
    }

    #[test]
    fn frozen_groups_stay_bit_identical() {
        let cfg = tiny();
        let ds = build_dataset(&cfg.trainer).unwrap();
        let sched = schedule(1);
        for id in [1, 5, 18] {
            let stage = &sched[id - 1];
            let mut model = build_model(&cfg).unwrap();
            let frozen = |n: &str| !stage.is_trainable(n);
            let before = model.store().snapshot(frozen).unwrap();
            let trained = model.store().snapshot(|n| stage.is_trainable(n)).unwrap();
            run_stage(&mut model, &ds, stage, &cfg, &RunOptions::default()).unwrap();
            assert_eq!(model.store().snapshot(frozen).unwrap(), before, "stage {id}");
            assert_ne!(model.store().snapshot(|n| stage.is_trainable(n)).unwrap(), trained, "stage {id}");
        }
    }

    #[test]
    fn resume_reproduces_losses() {
        let cfg = tiny();
        let ds = build_dataset(&cfg.trainer).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), verbose: false };
        let mut a = build_model(&cfg).unwrap();
        let full = train_full(&mut a, &ds, &cfg, 1, 2, &opts).unwrap();
        let mut b = build_model(&cfg).unwrap();
        let resumed = train_full(&mut b, &ds, &cfg, 2, 2, &opts).unwrap();
        assert_eq!(full[1].losses, resumed[0].losses);
        let m = read_manifest(&checkpoint_dir(dir.path(), 1)).unwrap();
        assert_eq!((m.stage, m.step, m.seed), (1, 2, cfg.trainer.seed));
        assert_eq!(m.config_hash, cfg.hash());
        let (loaded, _) = load_checkpoint(&checkpoint_dir(dir.path(), 2)).unwrap();
        assert_eq!(loaded.store().snapshot(|_| true).unwrap(), b.store().snapshot(|_| true).unwrap());
        let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
        assert!(log.starts_with("stage,step,idx,lambda,distortion,bpp_mv,bpp_context,total"));
    }

    #[test]
    fn mixed_precision_keeps_f32_masters() {
        let mut cfg = tiny();
        cfg.trainer.mixed_precision = true;
        let ds = build_dataset(&cfg.trainer).unwrap();
        let mut model = build_model(&cfg).unwrap();
        let r = run_stage(&mut model, &ds, &schedule(1)[7], &cfg, &RunOptions::default()).unwrap();
        assert!(r.metrics.steps + r.metrics.skipped_steps == 2);
        assert!(model.store().vars().all(|(_, v)| v.dtype() == DType::F32));
    }
}
