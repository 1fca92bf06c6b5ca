//! The `vvad` command line: one reproducible entry point per module.
//!
//! Every subcommand takes an optional TOML config file plus flags, with
//! precedence flags > file > defaults. A run creates its output directory,
//! writes a resolved-config snapshot (`config.toml`) next to its outputs,
//! and appends a timestamped line log (`run.log`). Rerunning a command from
//! its snapshot reproduces the outputs byte for byte.
//!
//! All randomness flows from the root `seed`: the synth, noise, and train
//! substreams derive from it by name, so sub-tree seeds in a config file
//! are overwritten during resolution.

use crate::eval::{
    cross_validate_land, cross_validate_of, holdout_eval, noise_study_land, noise_study_of,
    report_csv, EvalReport, OfPredictor,
};
use crate::models::{
    load_checkpoint, load_flow_clips, load_land_lstm, load_landmark_clips, load_of_convnet,
    predict_manifest, save_land_lstm, save_of_convnet, train_land_lstm, train_of_convnet,
    CheckpointConfig, LandLstm, LandLstmConfig, OfConvNet, OfConvNetConfig, Prediction,
    TrainConfig, TrainHistory, VoteScheme,
};
use crate::pipeline::{read_detections, read_shots, run_pipeline, PipelineConfig, ShotBoundary};
use crate::seed::derive_seed;
use crate::synth::{self, NoiseSpec, SynthConfig};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::{Path, PathBuf};

const SNAPSHOT_FILE: &str = "config.toml";
const LOG_FILE: &str = "run.log";
const MANIFEST_FILE: &str = "manifest.jsonl";
const MODEL_FILE: &str = "model.ckpt";
const EPOCHS_FILE: &str = "epochs.csv";
const PREDICTIONS_FILE: &str = "predictions.jsonl";
const REPORT_FILE: &str = "report.json";
const TABLE_FILE: &str = "table.csv";

/// Model family selector shared by train, crossval, and noise-study.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    #[default]
    LandLstm,
    OfConvnet,
}

/// Evaluation-protocol knobs without a home in the library config structs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Fold count for `vvad crossval`.
    pub k: usize,
    /// Frame-vote scheme for the flow model.
    pub vote: VoteScheme,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { k: 5, vote: VoteScheme::default() }
    }
}

/// Fully resolved run configuration; serialized verbatim as the snapshot.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; the only seed a user needs to set.
    pub seed: u64,
    /// Output directory; all files of a run land here.
    pub out: PathBuf,
    /// Upper bound for parallel workers; 0 lets the runtime decide.
    pub jobs: usize,
    pub arch: Arch,
    /// Flip labels of generated clips per the `noise` tree (marks the whole
    /// dataset auto-labeled).
    pub inject_noise: bool,
    /// Also write rasterized flow frames of this side length from `synth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_side: Option<usize>,
    pub synth: SynthConfig,
    pub noise: NoiseSpec,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub land_lstm: LandLstmConfig,
    pub of_convnet: OfConvNetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/latest"),
            jobs: 0,
            arch: Arch::default(),
            inject_noise: false,
            flow_side: None,
            synth: SynthConfig::default(),
            noise: NoiseSpec::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            land_lstm: LandLstmConfig::default(),
            of_convnet: OfConvNetConfig::default(),
        }
    }
}

impl RunConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    /// Fan the root seed out to the named substreams. Runs after all
    /// flag/file merging, so file-level sub-seeds never survive.
    fn resolve_seeds(&mut self) {
        self.synth.seed = derive_seed(self.seed, "synth", 0);
        self.noise.seed = derive_seed(self.seed, "noise", 0);
        self.train.seed = derive_seed(self.seed, "train", 0);
    }
}

#[derive(Parser)]
#[command(
    name = "vvad",
    version,
    about = "Visual voice activity detection: annotate, synthesize, train, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn face detections plus audio VAD into a labeled clip manifest.
    Pipeline(PipelineArgs),
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Train a model on a clip manifest.
    Train(TrainArgs),
    /// Run a trained model over a manifest and write per-clip predictions.
    Predict(PredictArgs),
    /// Evaluate a trained model on a manually verified test manifest.
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation on one manifest.
    Crossval(CrossvalArgs),
    /// Paired clean-vs-noisy-label training comparison.
    NoiseStudy(NoiseStudyArgs),
    /// Render evaluation reports as one CSV table.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed for all randomness in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Parallel worker bound; 0 picks the machine default.
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn merged(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Detection stream: JSON lines {"video_id", "frame_idx", "boxes"}.
    #[arg(long, value_name = "FILE")]
    detections: PathBuf,
    /// Audio VAD segments: JSON lines {"start_s", "end_s", "speech"}.
    #[arg(long, value_name = "FILE")]
    vad: PathBuf,
    /// Shot boundaries: JSON lines {"frame_idx"}; omit for single-shot video.
    #[arg(long, value_name = "FILE")]
    shots: Option<PathBuf>,
    /// Clip window length in frames.
    #[arg(long, value_name = "N")]
    clip_len: Option<usize>,
    /// Minimum speech coverage for a speaking window, in (0.5, 1].
    #[arg(long, value_name = "R")]
    speech_cov: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of clips (balanced, so even).
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Frames per clip.
    #[arg(long, value_name = "N")]
    clip_len: Option<usize>,
    /// Also rasterize flow frames at this side length.
    #[arg(long, value_name = "PX")]
    flow_side: Option<usize>,
    /// Flip generated labels per the noise tree before writing.
    #[arg(long)]
    inject_noise: bool,
    /// Label-flip rate for true-speaking clips.
    #[arg(long, value_name = "R")]
    flip_speaking: Option<f64>,
    /// Label-flip rate for true-silent clips.
    #[arg(long, value_name = "R")]
    flip_silent: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model family to train.
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Training clip manifest.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Clip manifest to run the model over.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model checkpoint.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Manually verified test manifest; auto-labeled clips are refused.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model family to cross-validate.
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Clip manifest; folds are stratified by label.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Fold count.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
}

#[derive(Args)]
struct NoiseStudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model family to study.
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    /// Training manifest (labels get flipped in the noisy arm).
    #[arg(long, value_name = "FILE")]
    train_manifest: PathBuf,
    /// Clean test manifest shared by both arms.
    #[arg(long, value_name = "FILE")]
    test_manifest: PathBuf,
    /// Label-flip rate for true-speaking clips.
    #[arg(long, value_name = "R")]
    flip_speaking: Option<f64>,
    /// Label-flip rate for true-silent clips.
    #[arg(long, value_name = "R")]
    flip_silent: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Report JSON files, each optionally prefixed `NAME=`; unnamed files
    /// use their parent directory's name.
    #[arg(value_name = "[NAME=]FILE", required = true)]
    inputs: Vec<String>,
}

/// Parse and run one invocation; returns the process exit code.
/// 0 on success, 1 for usage/validation errors, 2 for runtime failures.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Crossval(args) => cmd_crossval(args),
        Command::NoiseStudy(args) => cmd_noise_study(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Open output dir, snapshot, log, and thread pool for one run.
struct RunContext {
    dir: PathBuf,
    log: std::io::BufWriter<std::fs::File>,
}

impl RunContext {
    fn start(cfg: &RunConfig, command: &str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out)?;
        let snapshot = toml::to_string_pretty(cfg)
            .map_err(|e| Error::Internal(format!("config serialize: {e}")))?;
        std::fs::write(cfg.out.join(SNAPSHOT_FILE), snapshot)?;
        if cfg.jobs > 0 {
            // A later run in the same process cannot resize the global pool;
            // the first configuration wins, which is fine for a CLI process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
        }
        let file = std::fs::File::create(cfg.out.join(LOG_FILE))?;
        let mut ctx = RunContext { dir: cfg.out.clone(), log: std::io::BufWriter::new(file) };
        ctx.log(&format!("{command} started, seed {}", cfg.seed));
        Ok(ctx)
    }

    fn log(&mut self, msg: &str) {
        let stamp = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ");
        let _ = writeln!(self.log, "{stamp} {msg}");
        let _ = self.log.flush();
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("report serialize: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_epochs_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Internal(format!("csv write: {e}")))?;
    let rec = |e: &crate::models::EpochStats| {
        [e.epoch.to_string(), format_f64(e.train_loss), format_f64(e.val_loss)]
    };
    writer
        .write_record(["epoch", "train_loss", "val_loss"])
        .and_then(|()| history.epochs.iter().try_for_each(|e| writer.write_record(rec(e))))
        .map_err(|e| Error::Internal(format!("csv write: {e}")))?;
    writer.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    serde_json::to_string(&v).expect("finite f64 serializes")
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    if let Some(n) = args.clip_len {
        cfg.pipeline.clip_len = n;
    }
    if let Some(r) = args.speech_cov {
        cfg.pipeline.speech_cov = r;
    }
    cfg.resolve_seeds();
    cfg.pipeline.validate()?;

    let mut ctx = RunContext::start(&cfg, "pipeline")?;
    let videos = read_detections(&args.detections)?;
    let vad = crate::avad::read_segments(&args.vad)?;
    let shots: Vec<ShotBoundary> = match &args.shots {
        Some(path) => read_shots(path)?,
        None => Vec::new(),
    };
    ctx.log(&format!(
        "{} video(s), {} vad segment(s), {} shot boundarie(s)",
        videos.len(),
        vad.len(),
        shots.len()
    ));

    let mut records = Vec::new();
    for (video_id, frames) in &videos {
        let clips = run_pipeline(frames, &vad, &shots, video_id, &cfg.pipeline)?;
        ctx.log(&format!("{video_id}: {} clip(s)", clips.len()));
        records.extend(clips);
    }
    let manifest = ctx.path(MANIFEST_FILE);
    crate::manifest::write_manifest(&manifest, &records)?;
    ctx.log(&format!("wrote {} clip(s)", records.len()));
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    if let Some(n) = args.n {
        cfg.synth.n_clips = n;
    }
    if let Some(l) = args.clip_len {
        cfg.synth.clip_len = l;
    }
    if let Some(side) = args.flow_side {
        cfg.flow_side = Some(side);
    }
    if args.inject_noise {
        cfg.inject_noise = true;
    }
    if let Some(r) = args.flip_speaking {
        cfg.noise.flip_speaking = r;
    }
    if let Some(r) = args.flip_silent {
        cfg.noise.flip_silent = r;
    }
    cfg.resolve_seeds();

    let mut ctx = RunContext::start(&cfg, "synth")?;
    let mut clips = synth::generate(&cfg.synth)?;
    if cfg.inject_noise {
        let mask = synth::inject_label_noise(&mut clips, &cfg.noise)?;
        let flipped = mask.iter().filter(|&&f| f).count();
        ctx.log(&format!("injected label noise: {flipped}/{} clip(s) flipped", mask.len()));
    }
    let manifest = synth::write_dataset(&ctx.dir, &clips, cfg.flow_side)?;
    ctx.log(&format!("wrote {} clip(s)", clips.len()));
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    if let Some(arch) = args.arch {
        cfg.arch = arch;
    }
    cfg.resolve_seeds();

    let mut ctx = RunContext::start(&cfg, "train")?;
    let model_seed = derive_seed(cfg.seed, "model-init", 0);
    let model_path = ctx.path(MODEL_FILE);
    let history = match cfg.arch {
        Arch::LandLstm => {
            let clips = load_landmark_clips(&args.manifest)?;
            ctx.log(&format!("loaded {} landmark clip(s)", clips.len()));
            let mut model = LandLstm::new(&cfg.land_lstm, model_seed)?;
            let history = train_land_lstm(&mut model, &clips, &cfg.train)?;
            save_land_lstm(&model_path, &mut model, model_seed, &history)?;
            history
        }
        Arch::OfConvnet => {
            let clips = load_flow_clips(&args.manifest, cfg.of_convnet.input_size)?;
            ctx.log(&format!("loaded {} flow clip(s)", clips.len()));
            let mut model = OfConvNet::new(&cfg.of_convnet, model_seed)?;
            let history = train_of_convnet(&mut model, &clips, &cfg.train)?;
            save_of_convnet(&model_path, &mut model, model_seed, &history)?;
            history
        }
    };
    write_epochs_csv(&ctx.path(EPOCHS_FILE), &history)?;
    ctx.log(&format!(
        "trained {} epoch(s), best epoch {}{}",
        history.epochs.len(),
        history.best_epoch,
        if history.stopped_early { ", stopped early" } else { "" }
    ));
    println!("{}", model_path.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    cfg.resolve_seeds();
    let mut ctx = RunContext::start(&cfg, "predict")?;
    let preds = predict_manifest(&args.model, &args.manifest, cfg.eval.vote)?;
    let path = ctx.path(PREDICTIONS_FILE);
    let mut out = String::new();
    for p in &preds {
        out.push_str(
            &serde_json::to_string(p)
                .map_err(|e| Error::Internal(format!("prediction serialize: {e}")))?,
        );
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    ctx.log(&format!("wrote {} prediction(s)", preds.len()));
    println!("{}", path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    cfg.resolve_seeds();
    let mut ctx = RunContext::start(&cfg, "eval")?;
    let (meta, _) = load_checkpoint(&args.model)?;
    let report = match meta.config {
        CheckpointConfig::LandLstm(_) => {
            let (mut model, _) = load_land_lstm(&args.model)?;
            let clips = load_landmark_clips(&args.manifest)?;
            holdout_eval(&mut model, &clips)?
        }
        CheckpointConfig::OfConvNet(model_cfg) => {
            let (mut model, _) = load_of_convnet(&args.model)?;
            let clips = load_flow_clips(&args.manifest, model_cfg.input_size)?;
            holdout_eval(&mut OfPredictor { model: &mut model, scheme: cfg.eval.vote }, &clips)?
        }
    };
    let path = ctx.path(REPORT_FILE);
    write_json(&path, &report)?;
    ctx.log(&format!(
        "holdout over {} clip(s): tpr {} tnr {} acc {}",
        report.counts.total(),
        format_f64(report.tpr),
        format_f64(report.tnr),
        format_f64(report.acc)
    ));
    println!("{}", path.display());
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    if let Some(arch) = args.arch {
        cfg.arch = arch;
    }
    if let Some(k) = args.k {
        cfg.eval.k = k;
    }
    cfg.resolve_seeds();
    let mut ctx = RunContext::start(&cfg, "crossval")?;
    let report = match cfg.arch {
        Arch::LandLstm => {
            let clips = load_landmark_clips(&args.manifest)?;
            ctx.log(&format!("{}-fold over {} landmark clip(s)", cfg.eval.k, clips.len()));
            cross_validate_land(&clips, cfg.eval.k, &cfg.land_lstm, &cfg.train)?
        }
        Arch::OfConvnet => {
            let clips = load_flow_clips(&args.manifest, cfg.of_convnet.input_size)?;
            ctx.log(&format!("{}-fold over {} flow clip(s)", cfg.eval.k, clips.len()));
            cross_validate_of(&clips, cfg.eval.k, &cfg.of_convnet, &cfg.train, cfg.eval.vote)?
        }
    };
    let path = ctx.path(REPORT_FILE);
    write_json(&path, &report)?;
    let sigma = report.sigma.expect("folded report carries sigma");
    ctx.log(&format!(
        "pooled acc {}, fold sigma {}",
        format_f64(report.acc),
        format_f64(sigma.acc)
    ));
    println!("{}", path.display());
    Ok(())
}

fn cmd_noise_study(args: NoiseStudyArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    if let Some(arch) = args.arch {
        cfg.arch = arch;
    }
    if let Some(r) = args.flip_speaking {
        cfg.noise.flip_speaking = r;
    }
    if let Some(r) = args.flip_silent {
        cfg.noise.flip_silent = r;
    }
    cfg.resolve_seeds();
    let mut ctx = RunContext::start(&cfg, "noise-study")?;
    ctx.log(&format!(
        "flip rates: speaking {} silent {}",
        format_f64(cfg.noise.flip_speaking),
        format_f64(cfg.noise.flip_silent)
    ));
    let study = match cfg.arch {
        Arch::LandLstm => {
            let train = load_landmark_clips(&args.train_manifest)?;
            let test = load_landmark_clips(&args.test_manifest)?;
            noise_study_land(&train, &test, &cfg.noise, &cfg.land_lstm, &cfg.train)?
        }
        Arch::OfConvnet => {
            let train = load_flow_clips(&args.train_manifest, cfg.of_convnet.input_size)?;
            let test = load_flow_clips(&args.test_manifest, cfg.of_convnet.input_size)?;
            noise_study_of(&train, &test, &cfg.noise, &cfg.of_convnet, &cfg.train)?
        }
    };
    let path = ctx.path(REPORT_FILE);
    write_json(&path, &study)?;
    ctx.log(&format!(
        "clean acc {}, noisy acc {}, gap {}",
        format_f64(study.clean.acc),
        format_f64(study.noisy.acc),
        format_f64(study.accuracy_gap)
    ));
    println!("{}", path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut cfg = args.common.merged()?;
    cfg.resolve_seeds();
    let mut ctx = RunContext::start(&cfg, "report")?;
    let mut named: Vec<(String, EvalReport)> = Vec::new();
    for input in &args.inputs {
        let (name, path) = match input.split_once('=') {
            Some((name, path)) => (name.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(input);
                let name = path
                    .parent()
                    .and_then(|p| p.file_name())
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "report".to_string());
                (name, path)
            }
        };
        let text = std::fs::read_to_string(&path)?;
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        named.push((name, report));
    }
    let rows: Vec<(&str, &EvalReport)> =
        named.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let path = ctx.path(TABLE_FILE);
    std::fs::write(&path, report_csv(&rows))?;
    ctx.log(&format!("rendered {} report(s)", rows.len()));
    println!("{}", path.display());
    Ok(())
}
