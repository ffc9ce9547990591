use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use emotalk::config::{default_hyperparameters, Config, PerceptualConfig, Stage};
use emotalk::dataset::clip::load_clip;
use emotalk::dataset::landmarks::{LandmarkTrack, Landmarks};
use emotalk::dataset::manifest::{parse_clip_name, Manifest, Split};
use emotalk::dataset::preprocess::{
    build_templates, find_raw_clips, preprocess, save_templates, PreprocessOptions, SplitPolicy, MANIFEST_FILE,
    TEMPLATES_DIR,
};
use emotalk::dataset::template::load_template;
use emotalk::emotion::Emotion;
use emotalk::error::Error;
use emotalk::evaluation::report::load_eval_video;
use emotalk::evaluation::{
    evaluate_directories, evaluate_emotion_expression, load_classifier, train_emotion_classifier,
};
use emotalk::inference::{load_generator, prepare_image, synthesize, write_outputs};
use emotalk::media::{read_png, read_wav, read_y4m};
use emotalk::stimuli::{plan_stimuli, read_stimuli_manifest, render_stimuli};
use emotalk::training::{ClipStore, Trainer};
use emotalk::video::Video8;
use tch::Device;

#[derive(Parser, Debug)]
#[command(name = "emotalk", version, about = "Emotion-conditioned talking-face generation")]
struct Cli {
    /// TOML experiment config; defaults are used for missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set train.weights.alpha=50 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for training, classifier training and generation noise
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; every file a command writes goes below it
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into an existing, non-empty output directory
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// cpu, cuda or auto
    #[arg(long, global = true, default_value = "cpu")]
    device: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align a raw corpus (Y4M + WAV + landmark JSON per clip) and write a manifest
    Preprocess(PreprocessArgs),
    /// Build per-actor alignment templates from a raw corpus
    MakeTemplate(MakeTemplateArgs),
    /// Train the generator (init stage) or the full adversarial model (gan stage)
    Train(TrainArgs),
    /// Generate a talking-face video from speech, a face image and an emotion
    Generate(GenerateArgs),
    /// PSNR / SSIM / landmark distance against ground truth, optionally emotion accuracy
    Evaluate(EvaluateArgs),
    /// Train the video emotion classifier and report its accuracy
    Emoclf(EmoclfArgs),
    /// Generate mismatched audio/visual emotion stimuli over the 6x6 emotion grid
    Mismatch(MismatchArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Directory searched recursively for raw clips
    #[arg(long)]
    raw: PathBuf,
    /// Train/val/test fractions
    #[arg(long, default_value = "0.7,0.15,0.15")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// CSV with clip_path and split columns; replaces the random split
    #[arg(long)]
    split_file: Option<PathBuf>,
    /// Directory of {actor}.json templates to align to
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MakeTemplateArgs {
    #[arg(long)]
    raw: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Preprocessed dataset root
    #[arg(long)]
    data: PathBuf,
    /// Manifest; defaults to {data}/manifest.csv
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Manifest> {
        let path = self.manifest.clone().unwrap_or_else(|| self.data.join(MANIFEST_FILE));
        require_file(&path)?;
        Ok(Manifest::load(&path)?)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Overrides train.stage from the config
    #[arg(long)]
    stage: Option<Stage>,
    /// Init-stage checkpoint whose generator starts the gan stage
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Continue a run of the same stage from its checkpoint
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many steps of this invocation
    #[arg(long)]
    max_steps: Option<u64>,
    /// Clips kept in memory at once
    #[arg(long, default_value_t = 256)]
    cache: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Driving speech (WAV, any rate)
    #[arg(long)]
    audio: PathBuf,
    /// Face image (PNG, or the first frame of a Y4M video)
    #[arg(long)]
    image: PathBuf,
    /// 68-point landmarks of the image; defaults to {image stem}.landmarks.json
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Alignment template; defaults to an upright placement of the image's own landmarks
    #[arg(long)]
    template: Option<PathBuf>,
    /// Use the image as is (resized to 128x128) without landmarks
    #[arg(long)]
    no_align: bool,
    /// anger, disgust, fear, happiness, neutral or sadness
    #[arg(long, required_unless_present = "all_emotions")]
    emotion: Option<String>,
    /// One video per emotion
    #[arg(long, conflicts_with = "emotion")]
    all_emotions: bool,
    /// Also write lossless PNG frames
    #[arg(long)]
    png_frames: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Generated videos (clip directories, PNG frame directories or .y4m files)
    #[arg(long)]
    generated: PathBuf,
    /// Ground-truth videos with the same names
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Emotion classifier checkpoint; adds accuracy and confusion outputs
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Stimuli manifest giving the intended emotion per file; otherwise parsed from names
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmoclfArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Split scored after training, in addition to the training split
    #[arg(long, default_value = "test")]
    eval_split: Split,
    #[arg(long, default_value_t = 256)]
    cache: usize,
}

#[derive(Args, Debug)]
struct MismatchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Videos per (audio emotion, visual emotion) pair
    #[arg(long, default_value_t = 2)]
    per_pair: usize,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Truncate driving audio to this many frames
    #[arg(long)]
    max_frames: Option<usize>,
}

/// A problem with the invocation itself; exits with status 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_)
                | Error::UnknownEmotion { .. }
                | Error::EmotionIndex(_)
                | Error::TopologyMismatch(_)
                | Error::InvalidInput(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{} does not exist", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path) -> anyhow::Result<()> {
    if !path.is_dir() {
        return Err(usage(format!("{} is not a directory", path.display())));
    }
    Ok(())
}

impl Cli {
    fn load_config(&self) -> anyhow::Result<Config> {
        let mut config = match &self.config {
            Some(path) => {
                require_file(path)?;
                Config::load(path)?
            }
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            config.train.seed = seed;
            config.classifier.seed = seed;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            config = config.with_override(k, v)?;
        }
        Ok(config)
    }

    fn device(&self) -> anyhow::Result<Device> {
        match self.device.to_ascii_lowercase().as_str() {
            "cpu" => Ok(Device::Cpu),
            "cuda" => Ok(Device::Cuda(0)),
            "auto" => Ok(Device::cuda_if_available()),
            other => Err(usage(format!("unknown device {other:?}; expected cpu, cuda or auto"))),
        }
    }

    /// Creates the output directory. An existing non-empty one is only
    /// accepted with --force (or when `reuse` is set, as for resuming).
    fn out_dir(&self, reuse: bool) -> anyhow::Result<PathBuf> {
        let out = self.out.clone().ok_or_else(|| usage("--out is required"))?;
        let occupied = out.is_dir() && std::fs::read_dir(&out)?.next().is_some();
        if occupied && !self.force && !reuse {
            return Err(usage(format!("{} exists and is not empty; pass --force to write into it", out.display())));
        }
        if out.exists() && !out.is_dir() {
            return Err(usage(format!("{} is not a directory", out.display())));
        }
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }
}

fn parse_ratios(s: &str) -> anyhow::Result<(f64, f64, f64)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--ratios {s:?}: {e}")))?;
    match v.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(usage(format!("--ratios expects three comma-separated fractions, got {s:?}"))),
    }
}

fn cmd_preprocess(cli: &Cli, args: &PreprocessArgs) -> anyhow::Result<()> {
    require_dir(&args.raw)?;
    let split = match &args.split_file {
        Some(path) => {
            require_file(path)?;
            SplitPolicy::File(path.clone())
        }
        None => SplitPolicy::Ratios { ratios: parse_ratios(&args.ratios)?, seed: args.split_seed },
    };
    if let Some(dir) = &args.templates {
        require_dir(dir)?;
    }
    let out = cli.out_dir(false)?;
    let summary = preprocess(&args.raw, &out, &PreprocessOptions { split, templates: args.templates.clone() })?;
    for (name, reason) in &summary.rejected {
        println!("rejected {name}: {reason}");
    }
    let m = &summary.manifest;
    println!(
        "aligned {} clips, rejected {}; manifest: {} train / {} val / {} test",
        summary.aligned.len(),
        summary.rejected.len(),
        m.count(Split::Train),
        m.count(Split::Val),
        m.count(Split::Test)
    );
    Ok(())
}

fn cmd_make_template(cli: &Cli, args: &MakeTemplateArgs) -> anyhow::Result<()> {
    require_dir(&args.raw)?;
    let sources = find_raw_clips(&args.raw)?;
    let templates = build_templates(&sources)?;
    if templates.is_empty() {
        return Err(usage(format!("no usable landmark tracks under {}", args.raw.display())));
    }
    let out = cli.out_dir(false)?;
    save_templates(&out.join(TEMPLATES_DIR), &templates)?;
    println!("wrote {} templates to {}", templates.len(), out.join(TEMPLATES_DIR).display());
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let mut config = cli.load_config()?;
    if let Some(stage) = args.stage {
        config.train.stage = stage;
    }
    config.validate()?;
    match (config.train.stage, &args.init_checkpoint, &args.resume) {
        (_, Some(_), Some(_)) => return Err(usage("--init-checkpoint and --resume are mutually exclusive")),
        (Stage::Init, Some(_), None) => return Err(usage("--init-checkpoint only applies to --stage gan")),
        (Stage::Gan, None, None) => {
            return Err(usage("the gan stage starts from an init-stage model: pass --init-checkpoint or --resume"))
        }
        _ => {}
    }
    for path in args.init_checkpoint.iter().chain(&args.resume) {
        require_file(path)?;
    }
    if let PerceptualConfig::Vgg19 { weights } = &config.perceptual {
        if config.train.weights.beta > 0.0 && !weights.is_file() {
            return Err(usage(format!(
                "perceptual weights {} not found; set perceptual.weights or train.weights.beta = 0",
                weights.display()
            )));
        }
    }
    let manifest = args.data.load()?;
    let train = ClipStore::from_manifest(&args.data.data, &manifest, Split::Train, args.cache);
    if train.is_empty() {
        return Err(usage("the manifest has no training clips"));
    }
    let val = ClipStore::from_manifest(&args.data.data, &manifest, Split::Val, args.cache);
    let device = cli.device()?;
    let out = cli.out_dir(args.resume.is_some())?;
    let mut trainer = match (&args.init_checkpoint, &args.resume) {
        (_, Some(path)) => Trainer::resume(config, path, device)?,
        (Some(path), None) => Trainer::from_init_checkpoint(config, path, device)?,
        (None, None) => Trainer::new(config, device)?,
    };
    let summary = trainer.run(&train, (!val.is_empty()).then_some(&val), &out, args.max_steps)?;
    println!("stopped at iteration {}; last checkpoint {}", summary.iteration, summary.last_checkpoint.display());
    if let Some(best) = summary.best_checkpoint {
        println!("best validation checkpoint {}", best.display());
    }
    Ok(())
}

fn read_image(path: &Path) -> anyhow::Result<Video8> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
    Ok(match ext.as_str() {
        "y4m" => read_y4m(path)?.video.first_frame(),
        _ => read_png(path)?,
    })
}

/// Reads either a single 68-point face or a track (first frame used).
fn read_landmarks(path: &Path) -> anyhow::Result<Landmarks> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(lm) = serde_json::from_str::<Landmarks>(&text) {
        return Ok(lm);
    }
    let track = LandmarkTrack::load(path)?;
    track.get(0).cloned().ok_or_else(|| usage(format!("{}: no landmarks on the first frame", path.display())))
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> anyhow::Result<()> {
    let emotions: Vec<Emotion> = match (&args.emotion, args.all_emotions) {
        (_, true) => Emotion::ALL.to_vec(),
        (Some(name), false) => vec![name.parse()?],
        (None, false) => return Err(usage("pass --emotion NAME or --all-emotions")),
    };
    for path in [&args.checkpoint, &args.audio, &args.image] {
        require_file(path)?;
    }
    let landmarks = if args.no_align {
        None
    } else {
        let path = args.landmarks.clone().unwrap_or_else(|| {
            let stem = args.image.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            args.image.with_file_name(format!("{stem}.landmarks.json"))
        });
        if !path.is_file() {
            return Err(usage(format!(
                "no landmarks for the image at {}; pass --landmarks or --no-align",
                path.display()
            )));
        }
        Some(read_landmarks(&path)?)
    };
    let template = args.template.as_deref().map(load_template).transpose()?;
    let device = cli.device()?;
    let (generator, _) = load_generator(&args.checkpoint, device)?;
    let audio = read_wav(&args.audio)?;
    let image = prepare_image(&read_image(&args.image)?, landmarks.as_ref(), template.as_ref())?;
    let out = cli.out_dir(false)?;
    let seed = cli.seed.unwrap_or(0);
    for emotion in emotions {
        let video = synthesize(&generator, &audio, &image, emotion, seed)?;
        let files = write_outputs(&out, emotion.name(), &video, &audio, args.png_frames)?;
        println!("{}: {} frames -> {}", emotion.name(), video.frames, files.video.display());
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> anyhow::Result<()> {
    require_dir(&args.generated)?;
    if args.ground_truth.is_none() && args.classifier.is_none() {
        return Err(usage("pass --ground-truth, --classifier or both"));
    }
    for path in args.classifier.iter().chain(&args.labels) {
        require_file(path)?;
    }
    if let Some(gt) = &args.ground_truth {
        require_dir(gt)?;
    }
    let out = cli.out_dir(false)?;
    if let Some(gt) = &args.ground_truth {
        let report = evaluate_directories(&args.generated, gt)?;
        report.save(&out)?;
        let nlmd = report.mean_nlmd.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{} clips: PSNR {:.2} dB, SSIM {:.4}, NLMD {nlmd}",
            report.clips.len(),
            report.mean_psnr,
            report.mean_ssim
        );
    }
    if let Some(path) = &args.classifier {
        let (net, meta) = load_classifier(path, cli.device()?)?;
        let intended: Option<std::collections::HashMap<String, Emotion>> = match &args.labels {
            Some(p) => Some(
                read_stimuli_manifest(p)?
                    .into_iter()
                    .map(|s| (s.file.trim_end_matches(".y4m").to_string(), s.visual_emotion))
                    .collect(),
            ),
            None => None,
        };
        let (mut videos, mut labels) = (Vec::new(), Vec::new());
        let mut entries: Vec<PathBuf> =
            std::fs::read_dir(&args.generated)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            let is_video =
                (p.is_dir() && !p.to_string_lossy().ends_with("_frames")) || p.extension().is_some_and(|x| x == "y4m");
            if !is_video {
                continue;
            }
            let v = load_eval_video(&p)?;
            let label = match &intended {
                Some(map) => map.get(&v.name).copied(),
                None => parse_clip_name(&v.name).ok().map(|n| n.emotion),
            };
            match label {
                Some(l) => {
                    labels.push(l);
                    videos.push(v.video);
                }
                None => log::warn!("{}: no emotion label, skipped", v.name),
            }
        }
        if videos.is_empty() {
            bail!(usage("no labelled videos to classify"));
        }
        let report = evaluate_emotion_expression(&net, &videos, &labels, meta.config.classifier.window_frames)?;
        report.save(&out, "emotion")?;
        println!(
            "emotion accuracy {:.2}%, macro F1 {:.2}% over {} videos",
            report.accuracy,
            report.macro_f1,
            videos.len()
        );
    }
    Ok(())
}

fn split_videos(data: &DataArgs, manifest: &Manifest, split: Split) -> anyhow::Result<(Vec<Video8>, Vec<Emotion>)> {
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    for entry in manifest.split(split) {
        videos.push(load_clip(&manifest.resolve(&data.data, entry))?.video);
        labels.push(entry.emotion);
    }
    Ok((videos, labels))
}

fn cmd_emoclf(cli: &Cli, args: &EmoclfArgs) -> anyhow::Result<()> {
    let config = cli.load_config()?;
    let manifest = args.data.load()?;
    let train = ClipStore::from_manifest(&args.data.data, &manifest, Split::Train, args.cache);
    if train.is_empty() {
        return Err(usage("the manifest has no training clips"));
    }
    let device = cli.device()?;
    let out = cli.out_dir(false)?;
    let trained = train_emotion_classifier(&train, &config, device, Some(&out))?;
    let ckpt = out.join("classifier.safetensors");
    trained.save(&ckpt, &config)?;
    println!("classifier saved to {}", ckpt.display());
    let window = config.classifier.window_frames;
    for (split, prefix) in [(Split::Train, "train"), (args.eval_split, "eval")] {
        let (videos, labels) = split_videos(&args.data, &manifest, split)?;
        if videos.is_empty() {
            println!("{split}: no clips");
            continue;
        }
        let report = evaluate_emotion_expression(&trained.net, &videos, &labels, window)?;
        report.save(&out, prefix)?;
        println!(
            "{split} accuracy {:.2}%, macro F1 {:.2}% over {} clips",
            report.accuracy,
            report.macro_f1,
            videos.len()
        );
    }
    Ok(())
}

fn cmd_mismatch(cli: &Cli, args: &MismatchArgs) -> anyhow::Result<()> {
    require_file(&args.checkpoint)?;
    let manifest = args.data.load()?;
    let plan = plan_stimuli(&manifest, args.split, args.per_pair, cli.seed.unwrap_or(0))?;
    let (generator, _) = load_generator(&args.checkpoint, cli.device()?)?;
    let out = cli.out_dir(false)?;
    let path = render_stimuli(&generator, &plan, &args.data.data, &out, args.max_frames)?;
    let mismatched = plan.iter().filter(|p| p.stimulus.is_mismatched()).count();
    println!("{} videos, {mismatched} mismatched; manifest {}", plan.len(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(cli, a),
        Command::MakeTemplate(a) => cmd_make_template(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Emoclf(a) => cmd_emoclf(cli, a),
        Command::Mismatch(a) => cmd_mismatch(cli, a),
    }
}

fn command() -> clap::Command {
    let defaults = format!("Default hyperparameters (change with --config or --set):\n{}", default_hyperparameters());
    let mut cmd = Cli::command().after_help(defaults.clone());
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let text = defaults.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_help(text));
    }
    cmd
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
