//! Backpropagation through the whole two-frame coding pipeline agrees with
//! central finite differences in double precision.

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvc_core::data_io::{synth_clip, SynthRecipe};
use nvc_core::entropy_coding::QuantMode;
use nvc_core::frame_codec::{InterMode, VideoModel};
use nvc_core::{ModelConfig, SamplerConfig};

const IDX: usize = 42;

fn loss(model: &VideoModel, frames: &[Tensor]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lambda = model.lambda(IDX).unwrap();
    let pixels = 256.0;
    let intra = model.intra_train(&frames[0], IDX, QuantMode::Noise, &mut rng).unwrap();
    let state = model.start_state(&intra.x_hat).unwrap();
    let inter = model.inter_train(&frames[1], &state, IDX, QuantMode::Noise, InterMode::default(), &mut rng).unwrap();
    let mse = |a: &Tensor, b: &Tensor| (a - b).unwrap().sqr().unwrap().mean_all().unwrap();
    let d = (mse(&intra.raw, &frames[0]) + mse(&inter.raw, &frames[1])).unwrap();
    let bits = ((intra.bits + inter.bits_mv).unwrap() + inter.bits_ctx).unwrap();
    ((d * (lambda * 65025.0)).unwrap() + (bits / pixels).unwrap()).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_scalar::<f64>().unwrap()
}

fn nudge(var: &Var, i: usize, delta: f64) {
    let t = var.as_tensor();
    let mut v = t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    v[i] += delta;
    var.set(&Tensor::from_vec(v, t.shape(), t.device()).unwrap()).unwrap();
}

#[test]
fn pipeline_gradients_match_finite_differences() {
    let dev = Device::Cpu;
    let model = VideoModel::new(&ModelConfig::desk(), &SamplerConfig::default(), 11, DType::F64, &dev).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let clip = synth_clip(SynthRecipe::Translation { vx: 0.6, vy: -0.3 }, 2, 16, 16, &mut rng).unwrap();
    let frames: Vec<Tensor> = clip.frames.iter().map(|f| f.to_tensor(&dev, DType::F64).unwrap()).collect();

    let total = loss(&model, &frames);
    let grads = total.backward().unwrap();
    let value = scalar(&total).abs();
    // Differences below this are indistinguishable from rounding in the loss.
    let floor = |h: f64| 10.0 * f64::EPSILON * value / h;
    let mut checked = 0;
    let mut worst = (0.0f64, String::new());
    for (name, var) in model.store().vars() {
        let g = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all().unwrap().to_vec1::<f64>().unwrap(),
            None => continue,
        };
        // Entries whose gradient stands clear of the rounding floor.
        let live: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() > 100.0 * floor(1e-5)).collect();
        for _ in 0..live.len().min(3) {
            let i = live[rng.gen_range(0..live.len())];
            let central = |h: f64| {
                nudge(var, i, h);
                let up = scalar(&loss(&model, &frames));
                nudge(var, i, -2.0 * h);
                let down = scalar(&loss(&model, &frames));
                nudge(var, i, h);
                (up - down) / (2.0 * h)
            };
            // Bilinear warping is piecewise linear in the flow, so a stencil can
            // straddle a kink; a tenfold smaller step gets a second chance.
            let err = |h: f64| {
                let numeric = central(h);
                let diff = (g[i] - numeric).abs();
                let rel = if diff > floor(h) { diff / g[i].abs().max(numeric.abs()) } else { 0.0 };
                (rel, numeric)
            };
            checked += 1;
            let (mut rel, mut numeric) = err(1e-5);
            if rel > 1e-3 {
                (rel, numeric) = err(1e-6);
            }
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}]: analytic {} numeric {numeric}", g[i]));
            }
        }
    }
    assert!(checked > 50, "only {checked} entries carried gradient");
    assert!(worst.0 <= 1e-3, "rel err {:.2e} at {}", worst.0, worst.1);
}
