//! Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Criterion 11 trains three desk models through the `nvc`
//! binary; set `NVC_ACCEPTANCE_RUNS` to a directory holding `full`, `no_pls`
//! and `no_lstffm` runs to reuse earlier training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nvc_core::data_io::{rgb_to_yuv420, synth_clip, Frame, SynthRecipe};
use nvc_core::entropy_coding::{QuantMode, ScaleTable, SCALE_LEVELS};
use nvc_core::eval::{bd_rate, rd_sweep, weighted_psnr, Pchip, RDCurve, RDPoint};
use nvc_core::frame_codec::{FrameRing, InterMode};
use nvc_core::losses::{loss_all, loss_avg, loss_rec_rd};
use nvc_core::motion::warp;
use nvc_core::rate_control::{lambda_for_idx, sample_idx};
use nvc_core::trainer::{build_model, default_schedule, load_checkpoint, run_stage, ParamGroups, RunOptions};
use nvc_core::{
    decode_sequence, encode_sequence, Config, Container, EncodeOptions, Header, ModelConfig, SamplerConfig, VideoModel,
};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn pls_distribution() -> Outcome {
    let cfg = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 1_000_000;
    let mut counts = vec![0usize; cfg.n];
    for _ in 0..draws {
        counts[sample_idx(&cfg, &mut rng).map_err(e)?] += 1;
    }
    let len = cfg.n / 4;
    let expected = [1.0, 2.0, 4.0, 8.0].map(|w| w / 15.0);
    let mut seg_dev: f64 = 0.0;
    let mut uni_dev: f64 = 0.0;
    for k in 0..4 {
        let seg = &counts[k * len..(k + 1) * len];
        let freq = seg.iter().sum::<usize>() as f64 / draws as f64;
        seg_dev = seg_dev.max((freq - expected[k]).abs());
        for &c in seg {
            uni_dev = uni_dev.max((c as f64 / draws as f64 - expected[k] / len as f64).abs());
        }
    }
    ensure(seg_dev <= 0.005, format!("segment deviation {seg_dev:.5}"))?;
    ensure(uni_dev <= 0.002, format!("per-index deviation {uni_dev:.5}"))?;
    Ok(format!("segment dev {seg_dev:.5}, per-index dev {uni_dev:.6}"))
}

fn lambda_schedule() -> Outcome {
    let cfg = SamplerConfig::default();
    let checks = [(0, 0.002), (21, 0.01), (63, 0.25)];
    let mut worst: f64 = 0.0;
    for (idx, want) in checks {
        let got = lambda_for_idx(&cfg, idx).map_err(e)?;
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, format!("lambda({idx}) = {got:e}, want {want}"))?;
    }
    Ok(format!("max error {worst:.1e}"))
}

fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

fn values(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

fn warp_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (8, 8);
    let src = random_tensor(&[1, 3, h, w], 0.0, 1.0, &mut rng);
    let zero = Tensor::zeros((1, 2, h, w), DType::F64, &Device::Cpu).map_err(e)?;
    let id_err =
        values(&warp(&src, &zero).map_err(e)?).iter().zip(values(&src)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(id_err <= 1e-6, format!("zero-flow error {id_err:e}"))?;

    let s = values(&src);
    for (dx, dy) in [(1i64, 0i64), (-2, 1), (0, -1), (2, 2)] {
        let flow = Tensor::cat(
            &[
                Tensor::full(dx as f64, (1, 1, h, w), &Device::Cpu).map_err(e)?,
                Tensor::full(dy as f64, (1, 1, h, w), &Device::Cpu).map_err(e)?,
            ],
            1,
        )
        .map_err(e)?;
        let out = values(&warp(&src, &flow).map_err(e)?);
        for c in 0..3 {
            for y in 2..h - 2 {
                for x in 2..w - 2 {
                    let want = s[(c * h + (y as i64 + dy) as usize) * w + (x as i64 + dx) as usize];
                    let got = out[(c * h + y) * w + x];
                    ensure(got == want, format!("shift ({dx},{dy}) at ({x},{y}): {got} vs {want}"))?;
                }
            }
        }
    }

    let src_v = Var::from_tensor(&src).map_err(e)?;
    let flow_v = Var::from_tensor(&random_tensor(&[1, 2, h, w], -1.7, 1.7, &mut rng)).map_err(e)?;
    let weights = random_tensor(&[1, 3, h, w], -1.0, 1.0, &mut rng);
    let objective = |s: &Tensor, f: &Tensor| -> f64 {
        warp(s, f).unwrap().mul(&weights).unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap()
    };
    let out = warp(src_v.as_tensor(), flow_v.as_tensor()).map_err(e)?.mul(&weights).map_err(e)?.sum_all().map_err(e)?;
    let grads = out.backward().map_err(e)?;
    let mut worst: f64 = 0.0;
    for var in [&src_v, &flow_v] {
        let g = values(grads.get(var.as_tensor()).ok_or("missing gradient")?);
        let base = values(var.as_tensor());
        for i in 0..base.len() {
            let bump = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                Tensor::from_vec(v, var.as_tensor().shape(), &Device::Cpu).unwrap()
            };
            let other = if std::ptr::eq(var, &src_v) { flow_v.as_tensor() } else { src_v.as_tensor() };
            let f = |t: Tensor| if std::ptr::eq(var, &src_v) { objective(&t, other) } else { objective(other, &t) };
            let eps = 1e-6;
            let numeric = (f(bump(eps)) - f(bump(-eps))) / (2.0 * eps);
            let scale = g[i].abs().max(numeric.abs());
            if scale > 1e-9 {
                worst = worst.max((g[i] - numeric).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-3, format!("gradient rel err {worst:.2e}"))?;
    Ok(format!("identity {id_err:.1e}, integer shifts exact, gradient rel err {worst:.1e}"))
}

fn long_term_buffer() -> Outcome {
    let mut ring = FrameRing::start(0usize);
    for t in 1..=12 {
        let want = if t < 4 { 0 } else { t - 4 };
        let got = *ring.long_term_ref(t).map_err(e)?;
        ensure(got == want, format!("t={t}: got frame {got}, want {want}"))?;
        ring.push(t, t);
    }
    Ok("t = 1..12 all match".into())
}

fn loss_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.gen_range(0.002..0.25);
        let (d, bc, bm): (f64, f64, f64) =
            (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0));
        let got = loss_all(&loss_rec_rd(&d, &bc, lambda).map_err(e)?, &bm).map_err(e)?;
        worst = worst.max((got - (lambda * d + bc + bm)).abs());
    }
    ensure(worst <= 1e-12, format!("decomposition error {worst:e}"))?;
    let mut avg_err: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..12);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let naive = v.iter().sum::<f64>() / n as f64;
        avg_err = avg_err.max((loss_avg(&v).map_err(e)? - naive).abs());
    }
    ensure(avg_err <= 1e-12, format!("loss_avg error {avg_err:e}"))?;
    Ok(format!("decomposition {worst:.1e}, mean {avg_err:.1e}"))
}

fn schedule_fidelity() -> Outcome {
    let golden: [(&str, usize, f64, &str); 18] = [
        ("meD", 2, 1e-4, "IP"),
        ("meRD", 2, 1e-4, "IP"),
        ("recD", 2, 5e-5, "IP"),
        ("meRD", 3, 1e-4, "PP"),
        ("recD", 3, 5e-5, "PP"),
        ("recD", 4, 5e-5, "PP"),
        ("recD", 6, 5e-5, "PP"),
        ("recRD", 2, 5e-5, "IP"),
        ("recRD", 3, 5e-5, "PP"),
        ("recRD", 4, 5e-5, "PP"),
        ("recRD", 6, 5e-5, "PP"),
        ("all", 2, 5e-5, "IP"),
        ("all", 3, 5e-5, "PP"),
        ("all", 4, 5e-5, "PP"),
        ("all", 6, 5e-5, "PP"),
        ("all", 6, 1e-5, "PP"),
        ("all", 6, 5e-6, "PP"),
        ("avg", 6, 1e-5, "IPP"),
    ];
    let sched = default_schedule();
    ensure(sched.len() == 18, format!("{} stages", sched.len()))?;
    for (s, (loss, frames, lr, seg)) in sched.iter().zip(golden) {
        let row = (s.loss_type.name(), s.frames, s.lr, s.segment_type.to_string());
        ensure(row == (loss, frames, lr, seg.to_string()), format!("stage {}: {row:?}", s.id))?;
    }

    let mut cfg = Config::desk();
    cfg.trainer.synthetic_clips = 8;
    cfg.trainer.max_steps = Some(100);
    let mut model = build_model(&cfg).map_err(e)?;
    let dataset = nvc_core::trainer::build_dataset(&cfg.trainer).map_err(e)?;
    let motion =
        |m: &VideoModel| m.store().snapshot(|n| ParamGroups::group_of(n) == nvc_core::trainer::ParamGroup::MotionAll);
    let others =
        |m: &VideoModel| m.store().snapshot(|n| ParamGroups::group_of(n) != nvc_core::trainer::ParamGroup::MotionAll);
    let (m0, o0) = (motion(&model).map_err(e)?, others(&model).map_err(e)?);
    let report = run_stage(&mut model, &dataset, &sched[4], &cfg, &RunOptions::default()).map_err(e)?;
    ensure(report.metrics.steps == 100, format!("{} steps", report.metrics.steps))?;
    ensure(motion(&model).map_err(e)? == m0, "motion parameters changed during stage 5")?;
    ensure(others(&model).map_err(e)? != o0, "stage 5 left every trainable parameter unchanged")?;
    Ok(format!("18 rows match; {} motion tensors bit-identical after 100 steps", m0.len()))
}

fn laplace_symbols(n: usize, table: &ScaleTable, rng: &mut ChaCha8Rng) -> (Vec<i32>, Vec<usize>) {
    let support = table.support();
    let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..SCALE_LEVELS)).collect();
    let sym = idx
        .iter()
        .map(|&k| {
            let u: f64 = rng.gen_range(-0.5..0.5);
            let v = -table.scales()[k] * u.signum() * (1.0 - 2.0 * u.abs()).ln();
            (v.round() as i32).clamp(-support, support)
        })
        .collect();
    (sym, idx)
}

fn entropy_coding() -> Outcome {
    let table = ScaleTable::new(ModelConfig::default().support).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1000 {
        let n = rng.gen_range(0..400);
        let (sym, idx) = laplace_symbols(n, &table, &mut rng);
        let bytes = table.encode(&sym, &idx).map_err(e)?;
        ensure(table.decode(&bytes, &idx).map_err(e)? == sym, format!("trial {trial} did not round-trip"))?;
    }
    let (sym, idx) = laplace_symbols(100_000, &table, &mut rng);
    let bytes = table.encode(&sym, &idx).map_err(e)?.len() as f64;
    let est = table.estimate_bits(&sym, &idx).map_err(e)? / 8.0;
    ensure((bytes - est).abs() <= 0.02 * est + 32.0, format!("{bytes} bytes vs {est:.1} estimated"))?;
    Ok(format!("1000 round trips exact; 1e5 symbols: {bytes} bytes vs {est:.1} estimated"))
}

fn translating_clip(frames: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_clip(SynthRecipe::Translation { vx: 2.0, vy: 1.0 }, frames, 64, 64, &mut rng).unwrap().frames
}

fn container(checkpoint: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let h = Header {
            width: rng.gen_range(1..=u16::MAX),
            height: rng.gen_range(1..=u16::MAX),
            frame_count: rng.gen(),
            intra_period: if rng.gen_bool(0.2) { -1 } else { rng.gen_range(1..=i16::MAX) },
            q_idx: rng.gen(),
        };
        ensure(Header::from_bytes(&h.to_bytes()).map_err(e)? == h, format!("{h:?} did not round-trip"))?;
    }
    let (model, _) = load_checkpoint(checkpoint).map_err(e)?;
    let clip = translating_clip(8, 21);
    let enc = encode_sequence(&model, &clip, EncodeOptions::default()).map_err(e)?;
    let parsed = Container::from_bytes(&enc.container.to_bytes().map_err(e)?).map_err(e)?;
    let dec = decode_sequence(&model, &parsed).map_err(e)?;
    ensure(dec.len() == 8, format!("{} frames decoded", dec.len()))?;
    ensure(dec == enc.recon, "decoded frames differ from the encoder reconstruction")?;
    Ok(format!("10^4 headers round-trip; 8-frame decode bit-identical ({} bytes)", parsed.total_bytes()))
}

fn bd_oracle() -> Outcome {
    let anchor: Vec<RDPoint> = [(0.05, 30.1), (0.09, 32.4), (0.16, 34.6), (0.3, 36.5), (0.52, 38.1)]
        .iter()
        .map(|&(b, p)| RDPoint::new("anchor", None, b, p))
        .collect();
    let scaled = |f: f64| anchor.iter().map(|p| RDPoint { bpp: p.bpp * f, ..p.clone() }).collect::<Vec<_>>();
    let same = bd_rate(&anchor, &anchor).map_err(e)?;
    let half = bd_rate(&anchor, &scaled(0.5)).map_err(e)?;
    let double = bd_rate(&anchor, &scaled(2.0)).map_err(e)?;
    ensure(same.abs() < 1e-9, format!("identical curves give {same}%"))?;
    ensure((half + 50.0).abs() <= 0.1, format!("halved rates give {half}%"))?;
    ensure((double - 100.0).abs() <= 0.2, format!("doubled rates give {double}%"))?;
    Ok(format!("{same:.2e}%, {half:.3}%, {double:+.3}%"))
}

fn psnr_weighting() -> Outcome {
    let w = weighted_psnr([40.0, 30.0, 30.0]);
    ensure((w - 37.5).abs() < 1e-12, format!("got {w}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let p = [rng.gen_range(10.0..60.0), rng.gen_range(10.0..60.0), rng.gen_range(10.0..60.0)];
        let want = (6.0 * p[0] + p[1] + p[2]) / 8.0;
        ensure((weighted_psnr(p) - want).abs() <= 1e-9, format!("{p:?}"))?;
    }
    Ok("37.5 dB and 1000 random triples".into())
}

fn pipeline_gradient() -> Outcome {
    let dev = Device::Cpu;
    let model = VideoModel::new(&ModelConfig::desk(), &SamplerConfig::default(), 5, DType::F64, &dev).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let clip = synth_clip(SynthRecipe::Translation { vx: -0.7, vy: 0.4 }, 2, 16, 16, &mut rng).map_err(e)?;
    let frames: Vec<Tensor> = clip.frames.iter().map(|f| f.to_tensor(&dev, DType::F64).unwrap()).collect();
    let idx = 21;
    let loss = |m: &VideoModel| -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let a = m.intra_train(&frames[0], idx, QuantMode::Noise, &mut r).unwrap();
        let s = m.start_state(&a.x_hat).unwrap();
        let b = m.inter_train(&frames[1], &s, idx, QuantMode::Noise, InterMode::default(), &mut r).unwrap();
        let sq = |x: &Tensor, y: &Tensor| (x - y).unwrap().sqr().unwrap().mean_all().unwrap();
        let d = (sq(&a.raw, &frames[0]) + sq(&b.raw, &frames[1])).unwrap();
        let bits = ((a.bits + b.bits_mv).unwrap() + b.bits_ctx).unwrap();
        ((d * (m.lambda(idx).unwrap() * 65025.0)).unwrap() + (bits / 256.0).unwrap()).unwrap()
    };
    let total = loss(&model);
    let value = total.to_scalar::<f64>().map_err(e)?;
    let grads = total.backward().map_err(e)?;
    let floor = |h: f64| 10.0 * f64::EPSILON * value.abs() / h;
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for (_, var) in model.store().vars() {
        let Some(g) = grads.get(var.as_tensor()) else { continue };
        let g = values(g);
        let live: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() > 100.0 * floor(1e-5)).collect();
        for _ in 0..live.len().min(2) {
            let i = live[rng.gen_range(0..live.len())];
            let base = values(var.as_tensor());
            let at = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                var.set(&Tensor::from_vec(v, var.as_tensor().shape(), &dev).unwrap()).unwrap();
                loss(&model).to_scalar::<f64>().unwrap()
            };
            // A stencil straddling a warp kink gets a second try at a tenfold smaller step.
            let err = |h: f64| {
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                let diff = (g[i] - numeric).abs();
                if diff > floor(h) {
                    diff / g[i].abs().max(numeric.abs())
                } else {
                    0.0
                }
            };
            let mut rel = err(1e-5);
            if rel > 1e-3 {
                rel = err(1e-6);
            }
            at(0.0);
            checked += 1;
            worst = worst.max(rel);
        }
    }
    ensure(checked >= 50, format!("only {checked} entries checked"))?;
    ensure(worst <= 1e-3, format!("rel err {worst:.2e}"))?;
    Ok(format!("{checked} entries, worst rel err {worst:.1e}"))
}

fn train_desk(dir: &Path, extra: &[&str]) -> std::result::Result<PathBuf, String> {
    let ckpt = dir.join("ckpt/stage18");
    if ckpt.join("manifest.json").is_file() {
        return Ok(ckpt);
    }
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_nvc"))
        .args(["train", "--desk", "--quiet", "--out"])
        .arg(dir)
        .args(extra)
        .output()
        .map_err(e)?;
    ensure(out.status.success(), format!("train {extra:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))?;
    eprintln!("trained {} in {:.0} s", dir.display(), t.elapsed().as_secs_f64());
    Ok(ckpt)
}

const SWEEP: [usize; 4] = [0, 21, 42, 63];

struct DeskRuns {
    full: PathBuf,
    no_pls: std::result::Result<PathBuf, String>,
    no_lstffm: std::result::Result<PathBuf, String>,
}

fn inversions(points: &[RDPoint]) -> usize {
    points.windows(2).filter(|w| w[1].psnr < w[0].psnr).count()
}

fn desk_trends(runs: &DeskRuns) -> Outcome {
    let clip = translating_clip(8, 31);
    let reference: Vec<_> = clip.iter().map(rgb_to_yuv420).collect();
    let (model, _) = load_checkpoint(&runs.full).map_err(e)?;
    let full = rd_sweep(&model, &clip, Some(&reference), &SWEEP, -1, "full").map_err(e)?;
    let summary = |c: &[RDPoint]| c.iter().map(|p| format!("{:.3}/{:.2}", p.bpp, p.psnr)).collect::<Vec<_>>().join(" ");
    let mut notes = vec![format!("full {}", summary(&full))];
    let mut failures = Vec::new();

    let rising = full.windows(2).all(|w| w[1].bpp > w[0].bpp);
    let inv = inversions(&full);
    if !(rising && inv <= 1) {
        failures.push(format!("(a) bpp rising {rising}, {inv} PSNR inversions"));
    }

    let all: Vec<usize> = (0..64).collect();
    let intra = rd_sweep(&model, &clip, Some(&reference), &all, 1, "intra").map_err(e)?;
    let inter = &full[2];
    let mut by_psnr: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for p in &intra {
        by_psnr.entry((p.psnr * 1e9) as i64).or_insert((p.psnr, p.bpp));
    }
    let psnrs: Vec<f64> = by_psnr.values().map(|v| v.0).collect();
    let bpps: Vec<f64> = by_psnr.values().map(|v| v.1).collect();
    // Cheapest intra operating point no more than 0.5 dB below the inter quality.
    let target = inter.psnr - 0.5;
    let mut cheapest = intra.iter().filter(|p| p.psnr >= target).map(|p| p.bpp).fold(f64::INFINITY, f64::min);
    if psnrs.len() >= 2 && target >= psnrs[0] && target <= psnrs[psnrs.len() - 1] {
        cheapest = cheapest.min(Pchip::new(psnrs, bpps).map_err(e)?.eval(target));
    }
    let best = intra.iter().max_by(|a, b| a.psnr.total_cmp(&b.psnr)).unwrap();
    notes.push(format!(
        "(b) inter {:.3} bpp at {:.2} dB; intra needs {cheapest:.3} bpp for {target:.2} dB (peaks at {:.2} dB)",
        inter.bpp, inter.psnr, best.psnr
    ));
    let verdict = inter.bpp < cheapest;
    if !verdict {
        failures.push("(b) inter coding does not beat intra at matched quality".into());
    }

    for (name, run) in [("no-pls", &runs.no_pls), ("no-lstffm", &runs.no_lstffm)] {
        let curve = run.as_ref().map_err(Clone::clone).and_then(|ckpt| {
            let (m, _) = load_checkpoint(ckpt).map_err(e)?;
            let pts = rd_sweep(&m, &clip, Some(&reference), &SWEEP, -1, name).map_err(e)?;
            RDCurve::new(name, pts.clone()).map_err(e)?;
            Ok(pts)
        });
        match curve {
            Ok(pts) => {
                let bd = bd_rate(&pts, &full).map(|v| format!("{v:+.2}%")).unwrap_or_else(|err| format!("n/a ({err})"));
                notes.push(format!("{name} {} | BD-rate full vs {name} {bd}", summary(&pts)));
            }
            Err(err) => failures.push(format!("(c) {name}: {err}")),
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{}; {}", failures.join("; "), notes.join("; ")))
    }
}

type Results = BTreeMap<usize, (String, Outcome, f64)>;

fn record(results: &mut Results, n: usize, title: &str, f: &dyn Fn() -> Outcome) {
    let t = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    results.insert(n, (title.to_string(), outcome, t.elapsed().as_secs_f64()));
}

fn main() {
    let mut results = Results::new();
    let mut run = |n: usize, title: &str, f: &dyn Fn() -> Outcome| record(&mut results, n, title, f);
    run(1, "rate sampler distribution", &pls_distribution);
    run(2, "lambda schedule", &lambda_schedule);
    run(3, "bilinear warp", &warp_checks);
    run(4, "long-term reference buffer", &long_term_buffer);
    run(5, "loss algebra", &loss_algebra);
    run(6, "schedule fidelity and freezing", &schedule_fidelity);
    run(7, "entropy coding", &entropy_coding);
    run(9, "BD-rate oracle", &bd_oracle);
    run(10, "weighted PSNR", &psnr_weighting);
    run(12, "full-pipeline gradient", &pipeline_gradient);

    let keep = std::env::var_os("NVC_ACCEPTANCE_RUNS").map(PathBuf::from);
    let scratch = tempfile::tempdir().expect("temp dir");
    let root = keep.unwrap_or_else(|| scratch.path().to_path_buf());
    let t = Instant::now();
    match train_desk(&root.join("full"), &[]) {
        Ok(ckpt) => {
            run(8, "container and decoder", &|| container(&ckpt));
            let runs = DeskRuns {
                full: ckpt.clone(),
                no_pls: train_desk(&root.join("no_pls"), &["--no-pls"]),
                no_lstffm: train_desk(&root.join("no_lstffm"), &["--no-lstffm"]),
            };
            run(11, "desk-scale end to end", &|| desk_trends(&runs));
        }
        Err(err) => {
            for (n, title) in [(8, "container and decoder"), (11, "desk-scale end to end")] {
                run(n, title, &|| Err(format!("desk training failed: {err}")));
            }
        }
    }
    let container_secs = results.get(&8).map_or(0.0, |r| r.2);
    if let Some(r) = results.get_mut(&11) {
        r.2 = t.elapsed().as_secs_f64() - container_secs;
    }

    let mut failed = 0;
    for (n, (title, outcome, secs)) in &results {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {title} ({secs:.1} s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
