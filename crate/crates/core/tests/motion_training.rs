//! Trains the motion stages on synthetic clips and checks what the flow
//! estimator and motion codec learned.

use std::sync::OnceLock;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvc_core::data_io::{synth_clip, ClipSource, Dataset, SynthRecipe};
use nvc_core::entropy_coding::QuantMode;
use nvc_core::frame_codec::VideoModel;
use nvc_core::trainer::{build_batch, build_model, instance_loss, run_stage, schedule, RunOptions, StageConfig};
use nvc_core::Config;

struct Trained {
    model: VideoModel,
    before: f64,
    after: f64,
}

fn clips(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new(64);
    for i in 0..n {
        let recipe = if i % 6 == 5 {
            SynthRecipe::Static { noise_sigma: 0.0 }
        } else {
            SynthRecipe::Translation { vx: rng.gen_range(-3.0..3.0), vy: rng.gen_range(-3.0..3.0) }
        };
        ds.push(ClipSource::InMemory(synth_clip(recipe, 2, 64, 64, &mut rng).unwrap().frames));
    }
    ds
}

/// Mean prediction distortion over held-out clips with fixed noise.
fn held_out_me_d(model: &VideoModel, stage: &StageConfig, ds: &Dataset) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = 0.0;
    for i in 0..ds.len() {
        let inst = build_batch(model, ds, i, stage, true, &mut rng).unwrap();
        sum += instance_loss(model, &inst, stage, 65025.0, QuantMode::Noise, &mut rng).unwrap().breakdown.distortion;
    }
    sum / ds.len() as f64
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let cfg = Config::desk();
        let sched = schedule(20);
        let train = clips(24, 1);
        let held = clips(12, 2);
        let mut model = build_model(&cfg).unwrap();
        let before = held_out_me_d(&model, &sched[0], &held);
        run_stage(&mut model, &train, &sched[0], &cfg, &RunOptions::default()).unwrap();
        let after = held_out_me_d(&model, &sched[0], &held);
        let mut stage2 = sched[1].clone();
        stage2.epochs = 5;
        run_stage(&mut model, &train, &stage2, &cfg, &RunOptions::default()).unwrap();
        Trained { model, before, after }
    })
}

fn pair(recipe: SynthRecipe, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = synth_clip(recipe, 2, 64, 64, &mut rng).unwrap();
    let t = |i: usize| c.frames[i].to_tensor(&Device::Cpu, DType::F32).unwrap();
    (t(1), t(0))
}

#[test]
fn stage_one_halves_prediction_distortion() {
    let t = trained();
    assert!(t.after <= 0.5 * t.before, "meD {:.5} -> {:.5}", t.before, t.after);
}

#[test]
fn translation_is_recovered() {
    let t = trained();
    for seed in 0..3 {
        let (cur, reference) = pair(SynthRecipe::Translation { vx: 2.0, vy: 0.0 }, 10 + seed);
        let flow = t.model.flow_net.estimate_motion(&cur, &reference).unwrap();
        let mean = flow.mean((0, 2, 3)).unwrap().to_vec1::<f32>().unwrap();
        assert!((mean[0] - 2.0).abs() <= 0.5 && mean[1].abs() <= 0.5, "mean flow {mean:?}");
    }
}

#[test]
fn static_scene_has_near_zero_flow() {
    let t = trained();
    let (cur, reference) = pair(SynthRecipe::Static { noise_sigma: 0.0 }, 20);
    let flow = t.model.flow_net.estimate_motion(&cur, &reference).unwrap();
    let mag = flow.sqr().unwrap().sum(1).unwrap().sqrt().unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
    let mut sorted = mag.clone();
    sorted.sort_by(f32::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!(median <= 0.5, "median |flow| {median}");
}

#[test]
fn motion_codec_reproduces_zero_flow() {
    let t = trained();
    let zero = Tensor::zeros((1, 2, 64, 64), DType::F32, &Device::Cpu).unwrap();
    for idx in [0, 42, 63] {
        let q = t.model.gains(idx).unwrap().mv;
        let latent = t.model.mv_codec.mv_encode(&zero, &q).unwrap();
        let again = t.model.mv_codec.mv_encode(&zero, &q).unwrap();
        assert_eq!(latent, again);
        assert!(latent.bits >= 0.0);
        let dec = t.model.mv_codec.mv_decode(&latent, &q).unwrap();
        let err = dec.abs().unwrap().mean_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(err <= 0.5, "idx {idx}: mean |error| {err}");
    }
}
