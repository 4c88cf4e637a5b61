use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hmd_core::conditioning::{train_pc_autoencoder, PcAutoencoder};
use hmd_core::data::{
    bundle_voxel_grids, evaluate_bundles, generate_sequence, load_bundle, prediction_bundle, prepare_sequence,
    save_bundle, steps_sweep, stride_sweep, synth_generate, Ablation, GlobalConfig, PreparedSequence, Scenario,
    SequenceBundle, SynthSpec, WindowSet,
};
use hmd_core::denoiser::{load_denoiser, save_denoiser, train, CondNormalizer, Denoiser};
use hmd_core::diffusion::{build_schedule, strided_plan, DiffusionSchedule};
use hmd_core::metrics::{motion_windows, train_eval_autoencoder, EvalOptions, LatentEvalModel};
use hmd_core::streaming::latency;

#[derive(Parser)]
#[command(name = "hmd", version, about = "Full-body motion from head-mounted device signals")]
struct Cli {
    /// TOML configuration file; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set streaming.stride=10`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic sequence bundles.
    Synth(SynthArgs),
    /// Train the point-cloud autoencoder on the scenes of a bundle set.
    TrainPc(TrainPcArgs),
    /// Train the motion autoencoder used for latent-space metrics.
    TrainEvalAe(TrainEvalAeArgs),
    /// Train the denoiser.
    Train(TrainArgs),
    /// Stream motion for every bundle of a set.
    Generate(GenerateArgs),
    /// Score prediction bundles against ground truth.
    Evaluate(EvaluateArgs),
    /// Stride and sampling-step sweeps.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "mixed")]
    scenario: String,
    /// Seconds per sequence.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding width; defaults to `conditioning.d_img`.
    #[arg(long)]
    d_img: Option<usize>,
    /// Draw body scale and floor height per sequence.
    #[arg(long)]
    vary_body: bool,
    #[arg(long)]
    scene_density: Option<f64>,
}

#[derive(Args)]
struct TrainPcArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainEvalAeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Trained point-cloud autoencoder.
    #[arg(long)]
    pc: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    /// A bundle or a directory of bundles.
    #[arg(long, visible_alias = "input")]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pc: PathBuf,
    #[arg(long, visible_alias = "output")]
    out: PathBuf,
    #[arg(long)]
    stride: Option<usize>,
    /// Reverse steps per window.
    #[arg(long, visible_alias = "steps")]
    sample_steps: Option<usize>,
    /// Window length; must match the trained model.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Blank the image embeddings.
    #[arg(long)]
    no_image: bool,
    /// Blank the point-cloud latents.
    #[arg(long)]
    no_pc: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions, one directory per repetition. Repeatable.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long)]
    gt: PathBuf,
    /// Motion autoencoder for FID and diversity.
    #[arg(long)]
    eval_ae: Option<PathBuf>,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pc: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    sweep_stride: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sweep_steps: Vec<usize>,
    /// Motion autoencoder; adds FID to every row.
    #[arg(long)]
    eval_ae: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.downcast_ref::<hmd_core::Error>().map(|e| e.category()).unwrap_or("runtime");
            eprintln!("error [{category}]: {e:#}");
            ExitCode::from(exit_code(category))
        }
    }
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 2,
        "dataio" => 3,
        "shape" => 4,
        "motion" | "conditioning" => 5,
        "diffusion" | "denoiser" | "streaming" => 6,
        "metrics" => 7,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<GlobalConfig> {
    let base = match &cli.config {
        Some(p) => GlobalConfig::load(p)?,
        None => GlobalConfig::default(),
    };
    let mut overrides = GlobalConfig::env_overrides(std::env::vars());
    overrides.extend(cli.overrides.iter().cloned());
    Ok(base.with_overrides(&overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::TrainPc(a) => train_pc(&cfg, a),
        Command::TrainEvalAe(a) => train_eval_ae(&cfg, a),
        Command::Train(a) => train_denoiser(&cfg, a),
        Command::Generate(a) => generate(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Bench(a) => bench(&cfg, a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `dir` itself when it is a bundle, otherwise its bundle subdirectories by name.
fn find_bundles(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if dir.join("manifest.toml").is_file() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, dir.to_path_buf())]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.join("manifest.toml").is_file() {
            out.push((path.file_name().expect("entry has a name").to_string_lossy().into_owned(), path));
        }
    }
    if out.is_empty() {
        bail!("no bundles found under {}", dir.display());
    }
    out.sort();
    Ok(out)
}

fn load_all(dir: &Path) -> Result<Vec<(String, SequenceBundle)>> {
    find_bundles(dir)?
        .into_iter()
        .map(|(name, path)| Ok((name, load_bundle(&path).with_context(|| format!("loading {}", path.display()))?)))
        .collect()
}

fn schedule(cfg: &GlobalConfig) -> Result<DiffusionSchedule> {
    Ok(build_schedule(cfg.diffusion.steps, cfg.diffusion.schedule)?)
}

fn synth(cfg: &GlobalConfig, a: SynthArgs) -> Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let base = SynthSpec {
        scenario,
        duration_s: a.duration,
        seed: a.seed,
        d_img: a.d_img.unwrap_or(cfg.conditioning.d_img),
        fps: cfg.motion.fps,
        scene_density: a.scene_density.unwrap_or(SynthSpec::default().scene_density),
        ..SynthSpec::default()
    };
    for i in 0..a.count {
        let spec = if a.vary_body { base.corpus_member(i) } else { SynthSpec { seed: a.seed + i, ..base.clone() } };
        let dir = a.out.join(format!("seq-{i:03}"));
        save_bundle(&synth_generate(&spec)?, &dir)?;
        println!("wrote {} ({} frames, {scenario})", dir.display(), spec.frames());
    }
    Ok(())
}

fn train_pc(cfg: &GlobalConfig, a: TrainPcArgs) -> Result<()> {
    let mut grids = Vec::new();
    for (_, b) in load_all(&a.data)? {
        grids.extend(bundle_voxel_grids::<f32>(&b, cfg.conditioning.map_mode, cfg.pc.frame_stride)?);
    }
    let mut tc = cfg.pc_train_config();
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    let (model, losses) = train_pc_autoencoder(&grids, &tc)?;
    model.save(&a.out, tc.epochs as u64)?;
    write_json(&a.out.join("losses.json"), &losses)?;
    println!("trained on {} grids, final loss {:.6}", grids.len(), losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn train_eval_ae(cfg: &GlobalConfig, a: TrainEvalAeArgs) -> Result<()> {
    let mut ec = cfg.eval_ae_config();
    if let Some(e) = a.epochs {
        ec.epochs = e;
    }
    let mut windows = Vec::new();
    for (_, b) in load_all(&a.data)? {
        let world = ground_truth_world(&b)?;
        windows.extend(motion_windows(&world, ec.window).into_iter().map(|w| w.mapv(|v| v as f32)));
    }
    let (model, losses) = train_eval_autoencoder(&windows, &ec)?;
    model.save(&a.out)?;
    write_json(&a.out.join("losses.json"), &losses)?;
    println!("trained on {} windows, final loss {:.6}", windows.len(), losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn ground_truth_world(b: &SequenceBundle) -> Result<hmd_core::WorldMotion64> {
    let (_, gt) = hmd_core::data::aligned_motions(b, b)?;
    Ok(gt)
}

fn prepare_all(cfg: &GlobalConfig, data: &Path, pc: &Path) -> Result<(Vec<(String, SequenceBundle)>, Vec<PreparedSequence<f32>>)> {
    let pc = PcAutoencoder::<f32>::load(pc).context("loading point-cloud autoencoder")?;
    let bundles = load_all(data)?;
    let prepared = bundles
        .iter()
        .map(|(_, b)| prepare_sequence(b, &pc, cfg.conditioning.map_mode, cfg.conditioning.latent_every))
        .collect::<hmd_core::Result<Vec<_>>>()?;
    Ok((bundles, prepared))
}

fn train_denoiser(cfg: &GlobalConfig, a: TrainArgs) -> Result<()> {
    let (_, seqs) = prepare_all(cfg, &a.data, &a.pc)?;
    let set = WindowSet::new(&seqs, cfg.motion.frames, cfg.train.window_stride)?;
    let conds = set.sample_conditions(512)?;
    let norm = CondNormalizer::fit(&conds.iter().collect::<Vec<_>>())?;
    let mut dc = cfg.denoiser();
    let sample_width = conds[0].ncols();
    if dc.cond_dim != sample_width {
        bail!("bundles carry {sample_width} condition columns, config expects {}", dc.cond_dim);
    }
    if let Some(s) = a.seed {
        dc.seed = s;
    }
    let mut model = Denoiser::<f32>::from_parts(dc.clone(), hmd_core::denoiser::init_params(&dc)?, norm)?;
    let mut tc = cfg.train_config();
    if let Some(s) = a.steps {
        tc.steps = s;
    }
    if let Some(s) = a.seed {
        tc.seed = s;
    }
    if tc.checkpoint_every > 0 {
        tc.checkpoint_dir = Some(a.out.join("checkpoints"));
    }
    let sched = schedule(cfg)?;
    let every = (tc.steps / 20).max(1);
    let report = train(&mut model, &set, &sched, &tc, |step, loss| {
        if step % every == 0 || step + 1 == tc.steps {
            println!("step {step:>6} loss {loss:.5}");
        }
    })?;
    save_denoiser(&a.out, tc.steps as u64, &model)?;
    write_json(&a.out.join("losses.json"), &report.losses)?;
    Ok(())
}

#[derive(Serialize)]
struct GenerateSummary {
    name: String,
    stride: usize,
    sample_steps: usize,
    first_frame: usize,
    frames: usize,
    denoiser_calls: usize,
    calls_per_frame: f64,
    latency_s: f64,
}

fn generate(cfg: &GlobalConfig, a: GenerateArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(h) = a.stride {
        cfg.streaming.stride = h;
    }
    if let Some(n) = a.sample_steps {
        cfg.diffusion.sample_steps = n;
    }
    if let Some(s) = a.seed {
        cfg.streaming.seed = s;
    }
    if let Some(t) = a.window {
        cfg.motion.frames = t;
    }
    cfg.validate()?;
    let model: Denoiser<f32> = load_denoiser(&a.model).context("loading denoiser")?;
    if model.config.frames != cfg.motion.frames {
        bail!("model was trained on {}-frame windows, --window/motion.frames is {}", model.config.frames, cfg.motion.frames);
    }
    let (bundles, seqs) = prepare_all(&cfg, &a.data, &a.pc)?;
    let sched = schedule(&cfg)?;
    let plan = strided_plan(cfg.diffusion.steps, cfg.diffusion.sample_steps)?;
    let ablation = Ablation { no_image: a.no_image, no_pc: a.no_pc };
    let mut summaries = Vec::new();
    for ((name, bundle), seq) in bundles.iter().zip(&seqs) {
        let out = generate_sequence(&model, seq, cfg.session(), &sched, &plan, ablation)?;
        save_bundle(&prediction_bundle(bundle, &out.rotations, out.first_frame), a.out.join(name))?;
        println!(
            "{name}: {} frames in {:.2} s ({:.1} frames/s), {} denoiser calls",
            out.frames(),
            out.seconds,
            out.frames() as f64 / out.seconds.max(1e-12),
            out.denoiser_calls
        );
        summaries.push(GenerateSummary {
            name: name.clone(),
            stride: cfg.streaming.stride,
            sample_steps: cfg.diffusion.sample_steps,
            first_frame: out.first_frame,
            frames: out.frames(),
            denoiser_calls: out.denoiser_calls,
            calls_per_frame: out.denoiser_calls as f64 / out.frames().max(1) as f64,
            latency_s: latency(cfg.streaming.stride, cfg.dt()),
        });
    }
    write_json(&a.out.join("generate.json"), &summaries)
}

fn evaluate(cfg: &GlobalConfig, a: EvaluateArgs) -> Result<()> {
    let gts = load_all(&a.gt)?;
    let mut reps = Vec::new();
    for dir in &a.pred {
        let preds = load_all(dir)?;
        let mut rep = Vec::with_capacity(gts.len());
        for (name, _) in &gts {
            let p = preds
                .iter()
                .find(|(n, _)| n == name)
                .or_else(|| (preds.len() == 1 && gts.len() == 1).then(|| &preds[0]))
                .with_context(|| format!("no prediction for `{name}` in {}", dir.display()))?;
            rep.push(p.1.clone());
        }
        reps.push(rep);
    }
    let model = a.eval_ae.as_ref().map(LatentEvalModel::<f32>::load).transpose().context("loading eval autoencoder")?;
    let opts = EvalOptions { fps: cfg.motion.fps as f64, floor_half_window_s: cfg.eval.floor_half_window_s, seed: cfg.eval.seed };
    let gt_bundles: Vec<SequenceBundle> = gts.into_iter().map(|(_, b)| b).collect();
    let report = evaluate_bundles(&reps, &gt_bundles, model.as_ref(), &opts)?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

/// Everything of a bench row except wall-clock throughput.
#[derive(Serialize)]
struct BenchQuality {
    stride: usize,
    sample_steps: usize,
    mpjpe_cm: f64,
    hand_pe_cm: f64,
    fid: Option<f64>,
    scored_frames: usize,
    frames: usize,
    denoiser_calls: usize,
    calls_per_frame: f64,
    latency_s: f64,
}

#[derive(Serialize)]
struct BenchTiming {
    stride: usize,
    sample_steps: usize,
    frames_per_s: f64,
}

fn bench(cfg: &GlobalConfig, a: BenchArgs) -> Result<()> {
    if a.sweep_stride.is_empty() && a.sweep_steps.is_empty() {
        bail!("give --sweep-stride and/or --sweep-steps");
    }
    let model: Denoiser<f32> = load_denoiser(&a.model).context("loading denoiser")?;
    let (_, seqs) = prepare_all(cfg, &a.data, &a.pc)?;
    let eval = a.eval_ae.as_ref().map(LatentEvalModel::<f32>::load).transpose().context("loading eval autoencoder")?;
    let sched = schedule(cfg)?;
    let session = cfg.session();
    let mut reports = Vec::new();
    if !a.sweep_stride.is_empty() {
        reports.push(("stride", stride_sweep(&model, &seqs, &session, &sched, cfg.diffusion.sample_steps, &a.sweep_stride, eval.as_ref())?));
    }
    if !a.sweep_steps.is_empty() {
        reports.push(("steps", steps_sweep(&model, &seqs, &session, &sched, &a.sweep_steps, eval.as_ref())?));
    }
    let mut quality = serde_json::Map::new();
    let mut timing = serde_json::Map::new();
    for (name, report) in &reports {
        println!("{name} sweep\n{report}");
        let q: Vec<BenchQuality> = report
            .rows
            .iter()
            .map(|r| BenchQuality {
                stride: r.stride,
                sample_steps: r.sample_steps,
                mpjpe_cm: r.mpjpe_cm,
                hand_pe_cm: r.hand_pe_cm,
                fid: r.fid,
                scored_frames: r.scored_frames,
                frames: r.frames,
                denoiser_calls: r.denoiser_calls,
                calls_per_frame: r.calls_per_frame,
                latency_s: r.latency_s,
            })
            .collect();
        let t: Vec<BenchTiming> = report
            .rows
            .iter()
            .map(|r| BenchTiming { stride: r.stride, sample_steps: r.sample_steps, frames_per_s: r.frames_per_s })
            .collect();
        quality.insert(name.to_string(), serde_json::to_value(q)?);
        timing.insert(name.to_string(), serde_json::to_value(t)?);
    }
    write_json(&a.out.join("bench.json"), &quality)?;
    write_json(&a.out.join("timing.json"), &timing)
}
