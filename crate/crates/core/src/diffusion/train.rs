//! Two-stage v-prediction training: stage 1 updates every tensor on short
//! clips, stage 2 only the temporal tensors on longer clips.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autograd::{Grads, Mat, ParamStore, Tape};
use super::codec::patchify;
use super::denoiser::DenoiserInput;
use super::latent::LatentClip;
use super::model::{Model, ModelConfig};
use super::optim::{AdamW, OptimState};
use super::sampler::gaussian_like;
use super::schedule::{add_noise, v_target};
use crate::conditioning::{sample_condition_mode, tokens_from_env, CondMode, ConditionInput, LightTokenSeq};
use crate::dataset::container::{read_container, write_container, Tensor, TensorData};
use crate::dataset::{ClipRecord, ClipSource};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rig::LightRig;
use crate::sequencer::sample_overlap_t;
use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Lit video in, albedo video out, no lighting condition.
    Delight,
    /// Albedo video in, lit video out, conditioned on an HDR map or reference frame.
    Relight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Warmup,
    TemporalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub steps: u64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Clips per optimizer step.
    pub batch: usize,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    /// Relight condition mode for every sample; drawn per sample when absent.
    pub fixed_mode: Option<CondMode>,
    /// Replace a random number of leading input frames by ground truth.
    pub overlap: bool,
    /// Anneal the learning rate to zero over each stage along a half cosine.
    pub cosine_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr: 1e-3,
            weight_decay: 0.0,
            batch: 8,
            stage1: StageConfig { steps: 200, frames: 2 },
            stage2: StageConfig { steps: 100, frames: 8 },
            fixed_mode: None,
            overlap: true,
            cosine_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.stage1.frames == 0 || self.stage2.frames == 0 {
            return Err(Error::Config("batch and stage frame counts must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} / weight decay {} out of range",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn stage(&self, stage: Stage) -> StageConfig {
        match stage {
            Stage::Warmup => self.stage1,
            Stage::TemporalOnly => self.stage2,
        }
    }
}

/// One record encoded for a task.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainClip {
    pub id: String,
    pub source: ClipSource,
    pub input: LatentClip,
    pub target: LatentClip,
    pub tokens: Option<LightTokenSeq>,
    /// Lit frames usable as appearance references.
    pub references: Vec<Image>,
}

/// Delight maps lit to albedo; relight maps albedo to lit. A rig is needed
/// to turn stored HDR maps into light tokens.
pub fn prepare_clips(records: &[ClipRecord], task: Task, rig: Option<&LightRig>, patch: usize) -> Result<Vec<TrainClip>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no training records".into()));
    }
    records
        .iter()
        .map(|r| {
            r.validate()?;
            let lit = patchify(&r.lit, patch)?;
            let albedo = patchify(&r.albedo, patch)?;
            let (input, target) = match task {
                Task::Delight => (lit, albedo),
                Task::Relight => (albedo, lit),
            };
            let tokens = match (task, &r.env, rig) {
                (Task::Relight, Some(env), Some(rig)) => Some(tokens_from_env(rig, env)?),
                (Task::Relight, Some(_), None) => {
                    return Err(Error::InvalidArgument(format!(
                        "record {} has an HDR map but no rig was given",
                        r.id
                    )))
                }
                _ => None,
            };
            Ok(TrainClip {
                id: r.id.clone(),
                source: r.source,
                input,
                target,
                tokens,
                references: r.ref_pool.iter().map(|&i| r.lit[i].clone()).collect(),
            })
        })
        .collect()
}

/// Everything random about one training sample, drawn up front so the
/// forward/backward passes can run in any order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub clip: usize,
    pub start: usize,
    pub frames: usize,
    pub t: f64,
    pub noise_seed: u64,
    pub mode: CondMode,
    pub overlap: usize,
    pub reference: Option<usize>,
}

fn default_mode(task: Task, clip: &TrainClip) -> CondMode {
    match task {
        Task::Delight => CondMode::None,
        Task::Relight if clip.tokens.is_some() => CondMode::Hdr,
        Task::Relight => CondMode::Ref,
    }
}

/// Loss and gradients for one sample.
pub fn sample_loss(model: &Model, clips: &[TrainClip], spec: &SampleSpec, with_grads: bool) -> Result<(f64, Option<Grads>)> {
    let clip = clips
        .get(spec.clip)
        .ok_or_else(|| Error::InvalidArgument(format!("clip index {} out of range", spec.clip)))?;
    let x0 = clip.target.slice_frames(spec.start, spec.frames)?;
    let mut cond = clip.input.slice_frames(spec.start, spec.frames)?;
    let mut mask = vec![0.0; spec.frames];
    for f in 0..spec.overlap.min(spec.frames) {
        cond.frame_mut(f).copy_from_slice(x0.frame(f));
        mask[f] = 1.0;
    }
    let eps = gaussian_like(&x0, &mut ChaCha8Rng::seed_from_u64(spec.noise_seed));
    let x_t = add_noise(&x0, spec.t, &eps)?;
    let v = v_target(&x0, &eps, spec.t)?;

    let input = ConditionInput {
        tokens: clip.tokens.clone().filter(|_| spec.mode.uses_hdr()),
        reference: spec
            .reference
            .filter(|_| spec.mode.uses_ref())
            .map(|i| clip.references[i].clone()),
    };
    let mut tape = Tape::new(model.params());
    let ctx = model.embedder().context_on(&mut tape, &input, spec.mode)?;
    let den_in = DenoiserInput {
        x_t: &x_t,
        cond: &cond,
        mask: &mask,
        t: spec.t,
    };
    let out = model.denoiser().forward(&mut tape, &den_in, ctx)?;
    let loss = tape.mse(out, &v.to_mat())?;
    let value = tape.value(loss).data[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss on clip {}", clip.id)));
    }
    let grads = if with_grads { Some(tape.backward(loss)?) } else { None };
    Ok((value, grads))
}

/// Mean loss and gradient over a batch. Items run in parallel; gradients
/// are summed in item order so the result does not depend on scheduling.
pub fn batch_loss_and_gradients(model: &Model, clips: &[TrainClip], specs: &[SampleSpec]) -> Result<(f64, Grads)> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let results: Vec<(f64, Option<Grads>)> = specs
        .par_iter()
        .map(|s| sample_loss(model, clips, s, true))
        .collect::<Result<_>>()?;
    let mut total = model.params().zeros_like();
    let mut loss = 0.0;
    for (l, g) in &results {
        loss += l;
        total.add_assign(g.as_ref().expect("gradients requested"));
    }
    let n = specs.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

const EVAL_TS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone)]
pub struct Trainer {
    pub task: Task,
    pub config: TrainConfig,
    pub model: Model,
    pub optim: OptimState,
    pub stage: Stage,
    /// Steps completed in the current stage.
    pub step: u64,
}

impl Trainer {
    pub fn new(model: Model, task: Task, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optim = OptimState::new(model.params());
        Ok(Self {
            task,
            config,
            model,
            optim,
            stage: Stage::Warmup,
            step: 0,
        })
    }

    fn adam(&self) -> AdamW {
        let steps = self.config.stage(self.stage).steps;
        let lr = if self.config.cosine_decay && steps > 0 {
            let p = self.step as f64 / steps as f64;
            self.config.lr * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
        } else {
            self.config.lr
        };
        AdamW::new(lr, self.config.weight_decay)
    }

    /// Draws the batch for `step` of the current stage.
    pub fn batch_specs(&self, clips: &[TrainClip], step: u64) -> Result<Vec<SampleSpec>> {
        if clips.is_empty() {
            return Err(Error::InvalidArgument("no training clips".into()));
        }
        let frames = self.config.stage(self.stage).frames;
        let stream = ((self.stage as u64) << 48) | step;
        let mut rng = rng_for(self.config.seed, stream);
        (0..self.config.batch)
            .map(|_| {
                let ci = rng.random_range(0..clips.len());
                let clip = &clips[ci];
                if clip.target.frames < frames {
                    return Err(Error::InvalidArgument(format!(
                        "clip {} has {} frames, stage needs {frames}",
                        clip.id, clip.target.frames
                    )));
                }
                let start = rng.random_range(0..=clip.target.frames - frames);
                let t = rng.random::<f64>();
                let noise_seed = rng.random::<u64>();
                let mode = match self.task {
                    Task::Delight => CondMode::None,
                    Task::Relight => match self.config.fixed_mode {
                        Some(m) => m,
                        None if clip.tokens.is_none() => CondMode::Ref,
                        None => sample_condition_mode(clip.source, &mut rng),
                    },
                };
                let overlap = if self.config.overlap {
                    sample_overlap_t(&mut rng).min(frames - 1)
                } else {
                    0
                };
                let reference = if clip.references.is_empty() {
                    None
                } else {
                    Some(rng.random_range(0..clip.references.len()))
                };
                Ok(SampleSpec {
                    clip: ci,
                    start,
                    frames,
                    t,
                    noise_seed,
                    mode,
                    overlap,
                    reference,
                })
            })
            .collect()
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn train_step(&mut self, clips: &[TrainClip]) -> Result<f64> {
        let specs = self.batch_specs(clips, self.step)?;
        let (loss, grads) = batch_loss_and_gradients(&self.model, clips, &specs)?;
        let adam = self.adam();
        let stage = self.stage;
        let params = self.model.params_mut();
        let temporal: Vec<bool> = (0..params.len()).map(|i| params.is_temporal(i)).collect();
        adam.step(&mut self.optim, params, &grads, |id| stage == Stage::Warmup || temporal[id])?;
        self.step += 1;
        Ok(loss)
    }

    /// Runs the remaining steps of `stage`. Switching stage resets the step
    /// counter; calling again after an interruption resumes where it stopped.
    pub fn run_stage(&mut self, clips: &[TrainClip], stage: Stage, mut log: impl FnMut(u64, f64)) -> Result<()> {
        if stage != self.stage {
            self.stage = stage;
            self.step = 0;
        }
        let steps = self.config.stage(stage).steps;
        while self.step < steps {
            let loss = self.train_step(clips)?;
            log(self.step, loss);
        }
        Ok(())
    }

    /// Mean loss over a fixed batch: every clip at five noise levels, fixed
    /// noise, no overlap, default condition mode.
    pub fn eval_loss(&self, clips: &[TrainClip], frames: usize) -> Result<f64> {
        let mut specs = Vec::new();
        for (ci, clip) in clips.iter().enumerate() {
            let frames = frames.min(clip.target.frames);
            for (k, &t) in EVAL_TS.iter().enumerate() {
                specs.push(SampleSpec {
                    clip: ci,
                    start: 0,
                    frames,
                    t,
                    noise_seed: rng_for(self.config.seed, 0xe7a1 << 32 | (ci * EVAL_TS.len() + k) as u64).random(),
                    mode: default_mode(self.task, clip),
                    overlap: 0,
                    reference: (!clip.references.is_empty()).then_some(0),
                });
            }
        }
        if specs.is_empty() {
            return Err(Error::InvalidArgument("no evaluation clips".into()));
        }
        let losses: Vec<f64> = specs
            .par_iter()
            .map(|s| sample_loss(&self.model, clips, s, false).map(|r| r.0))
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let p = self.model.params();
        let mut tensors = Vec::with_capacity(3 * p.len());
        let mut push = |prefix: &str, mats: &[Mat]| -> Result<()> {
            for (id, m) in mats.iter().enumerate() {
                tensors.push(Tensor::new(
                    format!("{prefix}{}", p.name(id)),
                    vec![m.rows, m.cols],
                    TensorData::F64(m.data.clone()),
                )?);
            }
            Ok(())
        };
        push("param/", p.tensors())?;
        push("adam.m/", &self.optim.m)?;
        push("adam.v/", &self.optim.v)?;
        let meta = CheckpointMeta {
            kind: CHECKPOINT_KIND.into(),
            task: self.task,
            model: *self.model.config(),
            train: self.config.clone(),
            stage: self.stage,
            step: self.step,
            adam_step: self.optim.step,
            temporal: (0..p.len()).filter(|&i| p.is_temporal(i)).map(|i| p.name(i).to_string()).collect(),
        };
        write_container(path, &tensors, serde_json::to_value(&meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (manifest, tensors) = read_container(path)?;
        let meta: CheckpointMeta = serde_json::from_value(manifest.meta)?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::InvalidArgument(format!("{} is not a checkpoint", path.display())));
        }
        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for t in &tensors {
            let [rows, cols] = t.shape[..] else {
                return Err(Error::Shape(format!("tensor {} has rank {}", t.name, t.shape.len())));
            };
            let mat = Mat::from_vec(rows, cols, t.data.to_f64())?;
            if let Some(name) = t.name.strip_prefix("param/") {
                params.add(name, mat, meta.temporal.iter().any(|n| n == name))?;
            } else if t.name.starts_with("adam.m/") {
                m.push(mat);
            } else if t.name.starts_with("adam.v/") {
                v.push(mat);
            } else {
                return Err(Error::InvalidArgument(format!("unexpected tensor {}", t.name)));
            }
        }
        let shapes_match = |s: &[Mat]| s.len() == params.len() && s.iter().zip(params.tensors()).all(|(a, b)| a.shape() == b.shape());
        if !shapes_match(&m) || !shapes_match(&v) {
            return Err(Error::Shape("optimizer moments do not mirror the parameters".into()));
        }
        let model = Model::from_params(meta.model, params)?;
        meta.train.validate()?;
        Ok(Self {
            task: meta.task,
            config: meta.train,
            model,
            optim: OptimState {
                step: meta.adam_step,
                m,
                v,
            },
            stage: meta.stage,
            step: meta.step,
        })
    }
}

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub task: Task,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stage: Stage,
    pub step: u64,
    pub adam_step: u64,
    pub temporal: Vec<String>,
}
