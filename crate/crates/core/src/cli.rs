//! The `relight` command-line front end.
//!
//! Every subcommand reads the same TOML file (`--config`); missing sections
//! fall back to desk defaults. `--seed` overrides the data, training and
//! sampling seeds at once.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_lighting_rich, build_motion_rich, procedural_envs, read_dataset, read_stacks, split_ids, write_dataset,
    write_stacks, ClipRecord, Dataset, DType, Delighter, FlickerOracle, LightingRichConfig, MotionRange,
    DEFAULT_TRAIN_FRACTION,
};
use crate::diffusion::{prepare_clips, Model, ModelConfig, Stage, Task, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::hdr::{decode_pfm, decode_rgbe, encode_pfm, encode_png, encode_rgbe, rotate_env, tonemap_preview};
use crate::image::{Image, RadianceMap};
use crate::pipeline::{
    appearance_copy, delight_video, evaluate, full_relight, relight_video, InferSettings, ModelDelighter, Provenance,
};
use crate::rig::{LightRig, RigManifest, RigPreset};
use crate::studio::{random_scene, render_olat, synth_motion_clip, ClipLighting, SceneSpec};
use crate::util::{hash_hex, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSection {
    pub preset: RigPreset,
    /// Equirect map size the rig partitions; environment maps must match.
    pub map_width: usize,
    pub map_height: usize,
    /// Rig manifest written by `rig build`; replaces the preset when set.
    pub manifest: Option<PathBuf>,
}

impl Default for RigSection {
    fn default() -> Self {
        Self {
            preset: RigPreset::Desk,
            map_width: 32,
            map_height: 16,
            manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    /// Random scenes rendered when no scene files are given.
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            scenes: 4,
            width: 80,
            height: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Procedural environment maps generated when no maps are given.
    pub envs: usize,
    pub train_fraction: f64,
    pub half_precision: bool,
    pub lighting_rich: LightingRichConfig,
    /// Motion-rich clips: count, length and frame size.
    pub motion_clips: usize,
    pub motion_frames: usize,
    pub motion_width: usize,
    pub motion_height: usize,
    /// Gain jitter of the oracle delighter used without a checkpoint.
    pub flicker: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            envs: 4,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            half_precision: false,
            lighting_rich: LightingRichConfig {
                pairs_per_stack: 2,
                frames: 8,
                out_width: 64,
                out_height: 64,
                motion: MotionRange {
                    max_pan: 0.5,
                    zoom_min: 0.97,
                    zoom_max: 1.03,
                },
                rotate_envs: true,
            },
            motion_clips: 4,
            motion_frames: 8,
            motion_width: 64,
            motion_height: 64,
            flicker: FlickerOracle::default().delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub rig: RigSection,
    pub render: RenderSection,
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub infer: InferSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rig: RigSection::default(),
            render: RenderSection::default(),
            dataset: DatasetSection::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            infer: InferSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        let i = &self.infer;
        if i.steps == 0 || i.window == 0 || i.overlap >= i.window {
            return Err(Error::Config(format!(
                "sampling needs steps >= 1 and 0 <= overlap < window, got {i:?}"
            )));
        }
        Ok(())
    }

    /// Applies a seed given on the command line to every seeded stage.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.train.seed = s;
            self.infer.seed = s;
        }
        self
    }

    pub fn rig(&self) -> Result<LightRig> {
        match &self.rig.manifest {
            Some(path) => {
                let m: RigManifest = serde_json::from_slice(&read(path)?)?;
                LightRig::from_manifest(&m)
            }
            None => self.rig.preset.build(self.rig.map_width, self.rig.map_height),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "relight", version, about = "Desk-scale video relighting: data, training, inference, evaluation")]
pub struct Cli {
    /// TOML configuration shared by all subcommands.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Light rig manifests.
    #[command(subcommand)]
    Rig(RigCmd),
    /// One-light-at-a-time renders.
    #[command(subcommand)]
    Render(RenderCmd),
    /// Training datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Trains the delighting or relighting model (both stages).
    Train(TrainArgs),
    /// Runs a trained model over a directory of PFM frames.
    #[command(subcommand)]
    Infer(InferCmd),
    /// Full pipeline on a dataset's test split; writes a JSON report.
    Eval(EvalArgs),
    /// Environment map utilities.
    #[command(subcommand)]
    Env(EnvCmd),
}

#[derive(Debug, Subcommand)]
pub enum RigCmd {
    Build {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum RenderCmd {
    /// Renders random scenes (or the given scene files) under every rig light.
    Olat {
        #[arg(long)]
        out: PathBuf,
        /// Scene description in JSON; repeatable.
        #[arg(long = "scene")]
        scenes: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Lighting-rich clips: OLAT stacks relit by environment maps.
    BuildDl {
        #[arg(long)]
        stacks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Environment map (.hdr or .pfm); repeatable. Procedural maps otherwise.
        #[arg(long = "env")]
        envs: Vec<PathBuf>,
    },
    /// Motion-rich clips labelled by a frame-level delighter.
    BuildDm {
        #[arg(long)]
        out: PathBuf,
        /// Delighting checkpoint; a flicker oracle is used when absent.
        #[arg(long)]
        delight: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Delight,
    Relight,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub task: TaskArg,
    /// Dataset container; repeatable. Training uses each one's train split.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continues from a checkpoint instead of initializing.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Loss is printed every this many steps (0 = never).
    #[arg(long, default_value_t = 10)]
    pub log_every: u64,
}

#[derive(Debug, Subcommand)]
pub enum InferCmd {
    Delight {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        io: FramesIo,
    },
    Relight {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[command(flatten)]
        io: FramesIo,
    },
    /// Relights albedo frames to match a lit reference frame.
    Copy {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        io: FramesIo,
    },
    /// Delight, then relight.
    Full {
        #[arg(long)]
        delight: PathBuf,
        #[arg(long)]
        relight: PathBuf,
        #[arg(long)]
        env: PathBuf,
        /// Also writes the intermediate albedo frames here.
        #[arg(long)]
        albedo_out: Option<PathBuf>,
        #[command(flatten)]
        io: FramesIo,
    },
}

#[derive(Debug, Args)]
pub struct FramesIo {
    /// Directory of PFM frames, read in file-name order.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; frames are written as frame_NNNN.pfm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub delight: PathBuf,
    #[arg(long)]
    pub relight: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scores every record instead of the test split.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Subcommand)]
pub enum EnvCmd {
    /// Tonemapped PNG preview.
    Preview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        exposure: f64,
        #[arg(long, default_value_t = 2.2)]
        gamma: f64,
    },
    /// Rotates a map about the vertical axis.
    Rotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        degrees: f64,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 bad data, 3 non-finite values.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    crate::dataset::container::write_atomic(path, bytes)
}

fn load_config(path: Option<&Path>) -> Result<(PipelineConfig, String)> {
    match path {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| Error::Config(format!("{} is not UTF-8", p.display())))?;
            Ok((PipelineConfig::from_toml(&text)?, text))
        }
        None => Ok((PipelineConfig::default(), String::new())),
    }
}

fn is_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Reads a `.hdr` (RGBE) or `.pfm` environment map.
pub fn read_env(path: &Path) -> Result<RadianceMap> {
    let bytes = read(path)?;
    if is_ext(path, "pfm") {
        RadianceMap::try_from(decode_pfm(&bytes)?)
    } else {
        decode_rgbe(&bytes)
    }
}

pub fn read_frames(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| is_ext(p, "pfm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .pfm frames in {}", dir.display())));
    }
    paths.iter().map(|p| decode_pfm(&read(p)?)).collect()
}

pub fn write_frames(dir: &Path, frames: &[Image]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        write(&dir.join(format!("frame_{i:04}.pfm")), &encode_pfm(f))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model, Task)> {
    let t = Trainer::load(path)?;
    Ok((t.model, t.task))
}

fn expect_task(path: &Path, got: Task, want: Task) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!(
            "{} holds a {got:?} model, expected {want:?}",
            path.display()
        )));
    }
    Ok(())
}

fn check_rig(dataset: &Dataset, rig: &LightRig, path: &Path) -> Result<()> {
    if dataset.records.iter().any(|r| r.env.is_some()) && dataset.rig_id != rig.id() {
        return Err(Error::InvalidArgument(format!(
            "{} was built with rig {}, the configuration gives {}",
            path.display(),
            dataset.rig_id,
            rig.id()
        )));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let (cfg, text) = load_config(cli.config.as_deref())?;
    let cfg = cfg.with_seed(cli.seed);
    match cli.command {
        Command::Rig(RigCmd::Build { out }) => {
            let rig = cfg.rig()?;
            write(&out, &serde_json::to_vec_pretty(rig.manifest())?)
        }
        Command::Render(RenderCmd::Olat { out, scenes }) => render_olat_cmd(&cfg, &out, &scenes),
        Command::Dataset(DatasetCmd::BuildDl { stacks, out, envs }) => build_dl(&cfg, &stacks, &out, &envs),
        Command::Dataset(DatasetCmd::BuildDm { out, delight }) => build_dm(&cfg, &out, delight.as_deref()),
        Command::Train(args) => train(&cfg, &args),
        Command::Infer(cmd) => infer(&cfg, cmd),
        Command::Eval(args) => eval(&cfg, &text, &args),
        Command::Env(cmd) => env(cmd),
    }
}

fn render_olat_cmd(cfg: &PipelineConfig, out: &Path, scene_files: &[PathBuf]) -> Result<()> {
    let rig = cfg.rig()?;
    let scenes: Vec<SceneSpec> = if scene_files.is_empty() {
        (0..cfg.render.scenes)
            .map(|i| {
                let seed = derived_seed(cfg.seed, 0x5ce7e << 16 | i as u64);
                random_scene(&format!("scene-{i:03}"), seed, cfg.render.width, cfg.render.height, 1)
            })
            .collect()
    } else {
        scene_files
            .iter()
            .map(|p| Ok(serde_json::from_slice(&read(p)?)?))
            .collect::<Result<_>>()?
    };
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("no scenes to render".into()));
    }
    let stacks = scenes
        .iter()
        .map(|s| {
            let frame = s.frame_range().map_or(0, |r| r.0);
            render_olat(s, frame, &rig)
        })
        .collect::<Result<Vec<_>>>()?;
    write_stacks(out, &stacks, DType::F32)
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    rng_for(seed, stream).random()
}

fn split_and_write(cfg: &PipelineConfig, out: &Path, rig: &LightRig, records: Vec<ClipRecord>) -> Result<()> {
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let split = split_ids(&ids, cfg.dataset.train_fraction, cfg.seed)?;
    let dataset = Dataset {
        rig_id: rig.id().to_string(),
        split: Some(split),
        records,
    };
    let dtype = if cfg.dataset.half_precision { DType::F16 } else { DType::F32 };
    write_dataset(out, &dataset, dtype)
}

fn build_dl(cfg: &PipelineConfig, stacks: &Path, out: &Path, env_files: &[PathBuf]) -> Result<()> {
    let rig = cfg.rig()?;
    let stacks = read_stacks(stacks)?;
    let (w, h) = rig.map_dims();
    let envs = if env_files.is_empty() {
        procedural_envs(cfg.dataset.envs, w, h, cfg.seed)?
    } else {
        env_files.iter().map(|p| read_env(p)).collect::<Result<_>>()?
    };
    let records = build_lighting_rich(&stacks, &envs, &rig, &cfg.dataset.lighting_rich, cfg.seed)?;
    split_and_write(cfg, out, &rig, records)
}

fn build_dm(cfg: &PipelineConfig, out: &Path, delight: Option<&Path>) -> Result<()> {
    let rig = cfg.rig()?;
    let d = &cfg.dataset;
    if d.motion_frames == 0 {
        return Err(Error::Config("motion clips need at least one frame".into()));
    }
    let (w, h) = rig.map_dims();
    let envs = procedural_envs(d.motion_clips, w, h, cfg.seed ^ 0xd11)?;
    let clips = envs
        .iter()
        .enumerate()
        .map(|(i, env)| {
            let seed = derived_seed(cfg.seed, 0xd11 << 16 | i as u64);
            let scene = random_scene(&format!("motion-{i:03}"), seed, d.motion_width, d.motion_height, d.motion_frames as u32);
            synth_motion_clip(&scene, 0..d.motion_frames as u32, ClipLighting::Olat(&rig, env))
        })
        .collect::<Result<Vec<_>>>()?;
    let model;
    let delighter: Box<dyn Delighter> = match delight {
        Some(path) => {
            let (m, task) = load_model(path)?;
            expect_task(path, task, Task::Delight)?;
            model = m;
            Box::new(ModelDelighter {
                model: &model,
                settings: cfg.infer,
            })
        }
        None => Box::new(FlickerOracle { delta: d.flicker }),
    };
    let records = build_motion_rich(&clips, delighter.as_ref(), cfg.seed)?;
    split_and_write(cfg, out, &rig, records)
}

fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<()> {
    let task = match args.task {
        TaskArg::Delight => Task::Delight,
        TaskArg::Relight => Task::Relight,
    };
    let rig = cfg.rig()?;
    let mut records = Vec::new();
    for path in &args.data {
        let ds = read_dataset(path)?;
        check_rig(&ds, &rig, path)?;
        records.extend(ds.subset(true).into_iter().cloned());
    }
    let mut trainer = match &args.resume {
        Some(path) => {
            let t = Trainer::load(path)?;
            expect_task(path, t.task, task)?;
            t
        }
        None => {
            let mut model_cfg = cfg.model;
            model_cfg.embedder.n_lights = rig.len();
            Trainer::new(Model::init(model_cfg, cfg.train.seed)?, task, cfg.train.clone())?
        }
    };
    let clips = prepare_clips(&records, task, Some(&rig), trainer.model.config().patch)?;
    let every = args.log_every;
    for stage in [Stage::Warmup, Stage::TemporalOnly] {
        if stage == Stage::Warmup && trainer.stage == Stage::TemporalOnly {
            continue;
        }
        trainer.run_stage(&clips, stage, |step, loss| {
            if every > 0 && step % every == 0 {
                eprintln!("{stage:?} step {step} loss {loss:.6}");
            }
        })?;
        trainer.save(&args.out)?;
    }
    Ok(())
}

fn infer(cfg: &PipelineConfig, cmd: InferCmd) -> Result<()> {
    let s = &cfg.infer;
    match cmd {
        InferCmd::Delight { model, io } => {
            let (m, task) = load_model(&model)?;
            expect_task(&model, task, Task::Delight)?;
            write_frames(&io.out, &delight_video(&read_frames(&io.input)?, &m, s)?)
        }
        InferCmd::Relight { model, env, io } => {
            let (m, task) = load_model(&model)?;
            expect_task(&model, task, Task::Relight)?;
            let out = relight_video(&read_frames(&io.input)?, &read_env(&env)?, &cfg.rig()?, &m, s)?;
            write_frames(&io.out, &out)
        }
        InferCmd::Copy { model, reference, io } => {
            let (m, task) = load_model(&model)?;
            expect_task(&model, task, Task::Relight)?;
            let reference = decode_pfm(&read(&reference)?)?;
            write_frames(&io.out, &appearance_copy(&read_frames(&io.input)?, &reference, &m, s)?)
        }
        InferCmd::Full {
            delight,
            relight,
            env,
            albedo_out,
            io,
        } => {
            let (d, dt) = load_model(&delight)?;
            expect_task(&delight, dt, Task::Delight)?;
            let (r, rt) = load_model(&relight)?;
            expect_task(&relight, rt, Task::Relight)?;
            let (albedo, lit) = full_relight(&read_frames(&io.input)?, &read_env(&env)?, &cfg.rig()?, &d, &r, s)?;
            if let Some(dir) = albedo_out {
                write_frames(&dir, &albedo)?;
            }
            write_frames(&io.out, &lit)
        }
    }
}

fn eval(cfg: &PipelineConfig, config_text: &str, args: &EvalArgs) -> Result<()> {
    let rig = cfg.rig()?;
    let ds = read_dataset(&args.data)?;
    check_rig(&ds, &rig, &args.data)?;
    let (d, dt) = load_model(&args.delight)?;
    expect_task(&args.delight, dt, Task::Delight)?;
    let (r, rt) = load_model(&args.relight)?;
    expect_task(&args.relight, rt, Task::Relight)?;
    let records = if args.all { ds.records.iter().collect() } else { ds.subset(false) };
    let file_hash = |p: &Path| read(p).map(|b| hash_hex(&b));
    let provenance = Provenance {
        delight_checkpoint: Some(file_hash(&args.delight)?),
        relight_checkpoint: Some(file_hash(&args.relight)?),
        dataset: Some(file_hash(&args.data)?),
        ..Provenance::new(config_text, cfg.infer.seed)
    };
    let report = evaluate(&records, &rig, &d, &r, &cfg.infer, provenance)?;
    write(&args.out, &serde_json::to_vec_pretty(&report)?)
}

fn env(cmd: EnvCmd) -> Result<()> {
    match cmd {
        EnvCmd::Preview {
            input,
            out,
            exposure,
            gamma,
        } => {
            let map = read_env(&input)?;
            write(&out, &encode_png(&tonemap_preview(map.image(), exposure, gamma)?)?)
        }
        EnvCmd::Rotate { input, out, degrees } => {
            let rotated = rotate_env(&read_env(&input)?, degrees.to_radians())?;
            let bytes = if is_ext(&out, "pfm") {
                encode_pfm(rotated.image())
            } else {
                encode_rgbe(&rotated)?
            };
            write(&out, &bytes)
        }
    }
}
