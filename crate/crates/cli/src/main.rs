use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nvc_core::data_io::{
    count_yuv420_frames, load_image_folder, load_yuv420, rgb_to_yuv420, synth_clip, write_yuv420, yuv420_to_rgb,
    SynthRecipe,
};
use nvc_core::eval::{bd_rate, emit_rd, mean, rd_point, read_rd_csv, sequence_psnr, RDCurve, RDPoint};
use nvc_core::frame_codec::VideoModel;
use nvc_core::trainer::{
    build_dataset, build_model, checkpoint_dir, load_checkpoint, train_full, RunOptions, NUM_STAGES,
};
use nvc_core::{decode_sequence, encode_sequence, Config, Container, EncodeOptions, Frame, NvcError, Yuv420Frame};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(NvcError),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Core(e) => e.code(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<NvcError> for CliError {
    fn from(e: NvcError) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Parser)]
#[command(name = "nvc", version, about = "Variable-bitrate neural video codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training schedule and write per-stage checkpoints.
    Train(TrainArgs),
    /// Encode a clip into an EVNV container.
    Encode(EncodeArgs),
    /// Decode an EVNV container to raw I420.
    Decode(DecodeArgs),
    /// Weighted PSNR of a decoded clip against its reference.
    Eval(EvalArgs),
    /// Encode a clip at several rate indices and write an RD curve.
    Sweep(SweepArgs),
    /// BD-rate of a test curve against an anchor curve.
    Bdrate(BdrateArgs),
    /// Plot RD curves from CSV files.
    Plot(PlotArgs),
    /// Render a synthetic clip to raw I420.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML file overlaid on the chosen base profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk profile instead of the full-size defaults.
    #[arg(long)]
    desk: bool,
    #[arg(long, default_value_t = 1)]
    start_stage: usize,
    #[arg(long, default_value_t = NUM_STAGES)]
    end_stage: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mixed_precision: bool,
    /// Sample rate indices uniformly.
    #[arg(long)]
    no_pls: bool,
    /// Drop the long-term branch of the context fusion.
    #[arg(long)]
    no_lstffm: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Septuplet dataset root added to the synthetic clips.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory receiving `ckpt/` and `train_log.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SourceArgs {
    /// Raw I420 file, or a folder of numbered images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Number of frames to read; all when omitted.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// A `ckpt/stageNN` directory or a run directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 42)]
    q_idx: usize,
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    intra_period: i16,
    #[arg(long)]
    output: PathBuf,
    /// Also write the encoder-side reconstruction as I420.
    #[arg(long)]
    recon: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    decoded: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Container the decoded clip came from, for bpp.
    #[arg(long)]
    bitstream: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated rate indices.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 21, 42, 63])]
    q_idx: Vec<usize>,
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    intra_period: i16,
    #[arg(long, default_value = "nvc")]
    label: String,
    /// CSV path; a sibling .svg plot is written too.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BdrateArgs {
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(required = true)]
    curves: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// translation, static or rect.
    #[arg(long, default_value = "translation")]
    recipe: String,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    vx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    vy: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn train(a: TrainArgs) -> CliResult<()> {
    if a.start_stage < 1 || a.end_stage > NUM_STAGES || a.start_stage > a.end_stage {
        return usage(format!("stage range {}..={} is not within 1..={NUM_STAGES}", a.start_stage, a.end_stage));
    }
    let base = if a.desk { Config::desk() } else { Config::default() };
    let mut cfg = match &a.config {
        Some(p) => Config::load_over(&base, p)?,
        None => base,
    };
    if let Some(s) = a.seed {
        cfg.trainer.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.trainer.epochs_per_stage = e;
    }
    if a.max_steps.is_some() {
        cfg.trainer.max_steps = a.max_steps;
    }
    if a.data.is_some() {
        cfg.trainer.data = a.data.clone();
    }
    cfg.trainer.mixed_precision |= a.mixed_precision;
    if a.no_pls {
        cfg.trainer.pls = false;
    }
    if a.no_lstffm {
        cfg.model.long_term = false;
    }
    cfg.validate()?;
    let dataset = build_dataset(&cfg.trainer)?;
    let mut model = build_model(&cfg)?;
    let opts = RunOptions { out_dir: Some(a.out.clone()), verbose: !a.quiet };
    let reports = train_full(&mut model, &dataset, &cfg, a.start_stage, a.end_stage, &opts)?;
    for r in &reports {
        println!(
            "stage {:2} {:5} steps {:4} loss {:.4} -> {:.4}",
            r.stage.id,
            r.stage.loss_type.name(),
            r.metrics.steps,
            r.metrics.first_epoch_mean,
            r.metrics.last_epoch_mean
        );
    }
    println!("checkpoint {}", checkpoint_dir(&a.out, a.end_stage).display());
    Ok(())
}

/// A `ckpt/stageNN` directory, or the last stage under a run directory.
fn resolve_checkpoint(path: &Path) -> CliResult<PathBuf> {
    if path.join("manifest.json").is_file() {
        return Ok(path.to_path_buf());
    }
    let last = (1..=NUM_STAGES).rev().map(|s| checkpoint_dir(path, s)).find(|d| d.join("manifest.json").is_file());
    match last {
        Some(d) => Ok(d),
        None => Err(NvcError::Io(format!("{}: no checkpoint manifest found", path.display())).into()),
    }
}

fn open_model(path: &Path) -> CliResult<VideoModel> {
    Ok(load_checkpoint(&resolve_checkpoint(path)?)?.0)
}

/// Source frames in the working RGB space plus the I420 reference.
fn read_source(s: &SourceArgs) -> CliResult<(Vec<Frame>, Vec<Yuv420Frame>)> {
    if s.input.is_dir() {
        let mut frames = load_image_folder(&s.input)?;
        if let Some(n) = s.frames {
            if n > frames.len() {
                return Err(NvcError::Data(format!(
                    "{} holds {} frames, {n} requested",
                    s.input.display(),
                    frames.len()
                ))
                .into());
            }
            frames.truncate(n);
        }
        let yuv = frames.iter().map(rgb_to_yuv420).collect();
        return Ok((frames, yuv));
    }
    let (Some(w), Some(h)) = (s.width, s.height) else {
        return usage("raw I420 input needs --width and --height");
    };
    let n = match s.frames {
        Some(n) => n,
        None => count_yuv420_frames(&s.input, w, h)?,
    };
    if n == 0 {
        return usage("no frames to read");
    }
    let yuv = load_yuv420(&s.input, w, h, n)?;
    Ok((yuv.iter().map(yuv420_to_rgb).collect(), yuv))
}

fn check_q_idx(model: &VideoModel, q: usize) -> CliResult<()> {
    let n = model.rate_config().n;
    if q >= n {
        return usage(format!("--q-idx {q} is outside 0..={}", n - 1));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Core(NvcError::Io(format!("{}: {e}", path.display()))))
}

fn encode(a: EncodeArgs) -> CliResult<()> {
    let model = open_model(&a.checkpoint)?;
    check_q_idx(&model, a.q_idx)?;
    if a.intra_period == 0 || a.intra_period < -1 {
        return usage(format!("--intra-period must be -1 or positive, got {}", a.intra_period));
    }
    let (frames, _) = read_source(&a.source)?;
    let enc = encode_sequence(&model, &frames, EncodeOptions { q_idx: a.q_idx, intra_period: a.intra_period })?;
    let bytes = enc.container.to_bytes()?;
    write_file(&a.output, &bytes)?;
    if let Some(p) = &a.recon {
        write_yuv420(p, &enc.recon.iter().map(rgb_to_yuv420).collect::<Vec<_>>())?;
    }
    println!("frame type bpp_mv bpp_context");
    for (t, s) in enc.stats.iter().enumerate() {
        println!("{t:5} {:?} {:.5} {:.5}", s.frame_type, s.bpp_mv, s.bpp_context);
    }
    let n = enc.stats.len() as f64;
    let mv: f64 = enc.stats.iter().map(|s| s.bpp_mv).sum::<f64>() / n;
    let ctx: f64 = enc.stats.iter().map(|s| s.bpp_context).sum::<f64>() / n;
    println!("total bpp_mv {mv:.5} bpp_context {ctx:.5} bpp {:.5} bytes {}", enc.bpp()?, bytes.len());
    Ok(())
}

fn read_container(path: &Path) -> CliResult<Container> {
    let bytes = fs::read(path).map_err(|e| CliError::Core(NvcError::Io(format!("{}: {e}", path.display()))))?;
    Ok(Container::from_bytes(&bytes)?)
}

fn decode(a: DecodeArgs) -> CliResult<()> {
    let container = read_container(&a.input)?;
    let model = open_model(&a.checkpoint)?;
    let frames = decode_sequence(&model, &container)?;
    write_yuv420(&a.output, &frames.iter().map(rgb_to_yuv420).collect::<Vec<_>>())?;
    let h = &container.header;
    println!("decoded {} frames {}x{} q_idx {}", frames.len(), h.width, h.height, h.q_idx);
    Ok(())
}

fn fmt_db(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let n = count_yuv420_frames(&a.reference, a.width, a.height)?;
    let m = count_yuv420_frames(&a.decoded, a.width, a.height)?;
    if n != m {
        return Err(NvcError::Eval(format!("reference has {n} frames, decoded has {m}")).into());
    }
    let r = load_yuv420(&a.reference, a.width, a.height, n)?;
    let d = load_yuv420(&a.decoded, a.width, a.height, n)?;
    let per = sequence_psnr(&r, &d)?;
    for (t, p) in per.iter().enumerate() {
        println!("frame {t:4} psnr {}", fmt_db(*p));
    }
    println!("mean psnr {}", fmt_db(mean(&per)));
    if let Some(b) = &a.bitstream {
        let c = read_container(b)?;
        let bytes = c.total_bytes() as f64;
        println!("bpp {:.5}", bytes * 8.0 / (a.width * a.height * n) as f64);
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let model = open_model(&a.checkpoint)?;
    for &q in &a.q_idx {
        check_q_idx(&model, q)?;
    }
    let (frames, yuv) = read_source(&a.source)?;
    let mut points = Vec::new();
    for &q in &a.q_idx {
        let enc = encode_sequence(&model, &frames, EncodeOptions { q_idx: q, intra_period: a.intra_period })?;
        let p = rd_point(&a.label, q, &enc, &yuv)?;
        println!("q_idx {q:2} bpp {:.5} psnr {}", p.bpp, fmt_db(p.psnr));
        points.push(p);
    }
    nvc_core::eval::write_rd_csv(&points, &a.output)?;
    if let Ok(c) = RDCurve::new(&a.label, points) {
        emit_rd(&[c], &a.output)?;
    }
    println!("wrote {}", a.output.display());
    Ok(())
}

fn single_curve(path: &Path) -> CliResult<Vec<RDPoint>> {
    let mut groups = read_rd_csv(path)?;
    if groups.len() != 1 {
        return usage(format!("{} holds {} labels; pass one curve per file", path.display(), groups.len()));
    }
    Ok(groups.remove(0).1)
}

fn bdrate(a: BdrateArgs) -> CliResult<()> {
    let anchor = single_curve(&a.anchor)?;
    let test = single_curve(&a.test)?;
    let v = bd_rate(&anchor, &test)?;
    println!("BD-rate {v:+.2}% (piecewise cubic Hermite, log10 rate over weighted PSNR)");
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let mut curves = Vec::new();
    for p in &a.curves {
        for (label, pts) in read_rd_csv(p)? {
            curves.push(RDCurve::new(&label, pts)?);
        }
    }
    nvc_core::eval::plot_rd(&curves, &a.output)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let recipe = match a.recipe.as_str() {
        "translation" => SynthRecipe::Translation { vx: a.vx, vy: a.vy },
        "static" => SynthRecipe::Static { noise_sigma: a.noise },
        "rect" => SynthRecipe::MovingRect { vx: a.vx, vy: a.vy, rect_w: a.width / 3, rect_h: a.height / 3 },
        other => return usage(format!("unknown recipe {other:?} (translation, static, rect)")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let clip = synth_clip(recipe, a.frames, a.width, a.height, &mut rng)?;
    write_yuv420(&a.output, &clip.frames.iter().map(rgb_to_yuv420).collect::<Vec<_>>())?;
    println!("wrote {} frames to {}", clip.frames.len(), a.output.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Bdrate(a) => bdrate(a),
        Command::Plot(a) => plot(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(if matches!(e, CliError::Usage(_)) { 2 } else { 1 })
        }
    }
}
