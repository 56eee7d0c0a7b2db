//! Delighting, relighting and appearance copy over whole clips, plus the
//! evaluation report.

pub mod fixture;
pub mod metrics;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::{tokens_from_env, CondMode, ConditionInput};
use crate::dataset::{ClipRecord, Delighter};
use crate::diffusion::autograd::Mat;
use crate::diffusion::{patchify, unpatchify, Model, VelocityModel};
use crate::error::{Error, Result};
use crate::image::{Image, RadianceMap};
use crate::rig::LightRig;
use crate::sequencer::{autoregressive_generate, plan_windows};
use crate::studio::MotionClip;
use crate::util::hash_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSettings {
    pub steps: usize,
    /// Window length `L`; clips shorter than this run as one window.
    pub window: usize,
    pub overlap: usize,
    pub seed: u64,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            steps: 30,
            window: 30,
            overlap: 4,
            seed: 0,
        }
    }
}

/// Samples `frames` (the conditioning video) window by window and decodes.
pub fn generate_video(
    model: &dyn VelocityModel,
    patch: usize,
    frames: &[Image],
    context: &Mat,
    settings: &InferSettings,
) -> Result<Vec<Image>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty input video".into()));
    }
    let latents = patchify(frames, patch)?;
    let length = settings.window.min(frames.len());
    let overlap = settings.overlap.min(length - 1);
    let plan = plan_windows(frames.len(), length, overlap)?;
    let out = autoregressive_generate(model, &latents, context, &plan, settings.steps, settings.seed)?;
    unpatchify(&out, patch)
}

/// Lit frames to albedo with the fully-null context.
pub fn delight_video(frames: &[Image], model: &Model, settings: &InferSettings) -> Result<Vec<Image>> {
    let ctx = model.condition(&ConditionInput::default(), CondMode::None)?.context;
    generate_video(model, model.config().patch, frames, &ctx, settings)
}

pub fn relight_video(
    albedo: &[Image],
    env: &RadianceMap,
    rig: &LightRig,
    model: &Model,
    settings: &InferSettings,
) -> Result<Vec<Image>> {
    if env.dims() != rig.map_dims() {
        return Err(Error::Shape(format!(
            "environment {:?} does not match the rig's map {:?}",
            env.dims(),
            rig.map_dims()
        )));
    }
    let input = ConditionInput {
        tokens: Some(tokens_from_env(rig, env)?),
        reference: None,
    };
    let ctx = model.condition(&input, CondMode::Hdr)?.context;
    generate_video(model, model.config().patch, albedo, &ctx, settings)
}

pub fn appearance_copy(albedo: &[Image], reference: &Image, model: &Model, settings: &InferSettings) -> Result<Vec<Image>> {
    let input = ConditionInput {
        tokens: None,
        reference: Some(reference.clone()),
    };
    let ctx = model.condition(&input, CondMode::Ref)?.context;
    generate_video(model, model.config().patch, albedo, &ctx, settings)
}

/// Delight, then relight the predicted albedo. Returns both videos.
pub fn full_relight(
    frames: &[Image],
    env: &RadianceMap,
    rig: &LightRig,
    delight: &Model,
    relight: &Model,
    settings: &InferSettings,
) -> Result<(Vec<Image>, Vec<Image>)> {
    let albedo = delight_video(frames, delight, settings)?;
    let lit = relight_video(&albedo, env, rig, relight, settings)?;
    Ok((albedo, lit))
}

/// Frame-level pseudo-albedo from a delighting model: each frame is sampled
/// on its own, so consecutive frames are not tied together.
pub struct ModelDelighter<'a> {
    pub model: &'a Model,
    pub settings: InferSettings,
}

impl Delighter for ModelDelighter<'_> {
    fn delight_frame(&self, clip: &MotionClip, frame: usize, _rng: &mut ChaCha8Rng) -> Result<Image> {
        let f = clip
            .lit
            .get(frame)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} outside clip")))?;
        let settings = InferSettings {
            seed: crate::sequencer::window_seed(self.settings.seed, frame + 1),
            ..self.settings
        };
        let mut out = delight_video(std::slice::from_ref(f), self.model, &settings)?;
        Ok(out.remove(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScores {
    pub psnr: f64,
    pub ssim: f64,
    pub warp_error: Option<f64>,
    pub flicker: f64,
}

/// Per-frame PSNR/SSIM means against `target` (over `masks` when given),
/// warp error along `flows`, and flicker of `pred`.
pub fn score_video(
    pred: &[Image],
    target: &[Image],
    masks: Option<&[Vec<bool>]>,
    flows: Option<&[crate::studio::AffineFlow]>,
) -> Result<VideoScores> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predicted vs {} target frames", pred.len(), target.len())));
    }
    let per_frame: Vec<(f64, f64)> = (0..pred.len())
        .into_par_iter()
        .map(|i| {
            let m = masks.map(|m| m[i].as_slice()).filter(|m| m.iter().any(|&x| x));
            Ok((
                metrics::psnr_masked(&pred[i], &target[i], m)?,
                metrics::ssim_masked(&pred[i], &target[i], m)?,
            ))
        })
        .collect::<Result<_>>()?;
    let n = pred.len() as f64;
    Ok(VideoScores {
        psnr: per_frame.iter().map(|p| p.0).sum::<f64>() / n,
        ssim: per_frame.iter().map(|p| p.1).sum::<f64>() / n,
        warp_error: flows.map(|f| metrics::temporal_warp_error(pred, f)).transpose()?,
        flicker: metrics::flicker_index(pred)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub id: String,
    /// Predicted albedo against the record's albedo.
    pub delight: VideoScores,
    /// Relit output against the record's lit frames.
    pub relight: VideoScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub delight_psnr: f64,
    pub delight_ssim: f64,
    pub relight_psnr: f64,
    pub relight_ssim: f64,
    pub relight_warp_error: Option<f64>,
    pub relight_flicker: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub delight_checkpoint: Option<String>,
    pub relight_checkpoint: Option<String>,
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clips: Vec<ClipReport>,
    pub aggregate: Aggregate,
    pub provenance: Provenance,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            config_hash: hash_hex(config_text.as_bytes()),
            seed,
            delight_checkpoint: None,
            relight_checkpoint: None,
            dataset: None,
        }
    }
}

/// Runs the two-stage pipeline on every lighting-rich record and scores
/// both stages against ground truth. Clips are processed in parallel; each
/// clip's seed is derived from its position so results do not depend on
/// scheduling.
pub fn evaluate(
    records: &[&ClipRecord],
    rig: &LightRig,
    delight: &Model,
    relight: &Model,
    settings: &InferSettings,
    provenance: Provenance,
) -> Result<MetricReport> {
    let eval: Vec<&ClipRecord> = records.iter().copied().filter(|r| r.env.is_some()).collect();
    if eval.is_empty() {
        return Err(Error::InvalidArgument("no records with an HDR map to evaluate".into()));
    }
    let clips: Vec<ClipReport> = eval
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let s = InferSettings {
                seed: crate::sequencer::window_seed(settings.seed, i + 1),
                ..*settings
            };
            let env = r.env.as_ref().expect("filtered");
            let (albedo, lit) = full_relight(&r.lit, env, rig, delight, relight, &s)?;
            let masks = r.masks.as_deref();
            let flows = r.flows.as_deref();
            Ok(ClipReport {
                id: r.id.clone(),
                delight: score_video(&albedo, &r.albedo, masks, flows)?,
                relight: score_video(&lit, &r.lit, masks, flows)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = clips.len() as f64;
    let mean = |f: &dyn Fn(&ClipReport) -> f64| clips.iter().map(f).sum::<f64>() / n;
    let warp: Option<Vec<f64>> = clips.iter().map(|c| c.relight.warp_error).collect();
    let aggregate = Aggregate {
        delight_psnr: mean(&|c| c.delight.psnr),
        delight_ssim: mean(&|c| c.delight.ssim),
        relight_psnr: mean(&|c| c.relight.psnr),
        relight_ssim: mean(&|c| c.relight.ssim),
        relight_warp_error: warp.map(|w| w.iter().sum::<f64>() / n),
        relight_flicker: mean(&|c| c.relight.flicker),
    };
    Ok(MetricReport {
        clips,
        aggregate,
        provenance,
    })
}
