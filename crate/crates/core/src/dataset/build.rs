use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{camera_motion_augment, MotionTrack};
use super::compose::compose_relight;
use super::record::{ClipRecord, ClipSource};
use crate::error::{Error, Result};
use crate::hdr::rotate_env;
use crate::image::{Image, RadianceMap};
use crate::rig::LightRig;
use crate::studio::{MotionClip, OlatStack};
use crate::util::rng_for;

/// Per-clip motion magnitudes for synthetic camera moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionRange {
    /// Largest pan per axis, output pixels per frame.
    pub max_pan: f64,
    /// Total zoom over a clip is drawn from `[zoom_min, zoom_max]`.
    pub zoom_min: f64,
    pub zoom_max: f64,
}

impl Default for MotionRange {
    fn default() -> Self {
        Self {
            max_pan: 2.0,
            zoom_min: 0.9,
            zoom_max: 1.1,
        }
    }
}

impl MotionRange {
    pub fn sample(&self, frames: usize, rng: &mut ChaCha8Rng) -> MotionTrack {
        let pan = [0, 1].map(|_| {
            if self.max_pan > 0.0 {
                rng.random_range(-self.max_pan..=self.max_pan)
            } else {
                0.0
            }
        });
        let total = if self.zoom_max > self.zoom_min {
            rng.random_range(self.zoom_min..=self.zoom_max)
        } else {
            self.zoom_min
        };
        let zoom = if frames > 1 {
            total.powf(1.0 / (frames - 1) as f64)
        } else {
            1.0
        };
        MotionTrack { pan, zoom }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightingRichConfig {
    pub pairs_per_stack: usize,
    pub frames: usize,
    pub out_width: usize,
    pub out_height: usize,
    pub motion: MotionRange,
    pub rotate_envs: bool,
}

fn augment_mask(mask: &[bool], dims: (usize, usize), track: &MotionTrack, frames: usize, out: (usize, usize)) -> Result<Vec<Vec<bool>>> {
    let img = Image::new(dims.0, dims.1, mask.iter().map(|&m| [if m { 1.0 } else { 0.0 }; 3]).collect())?;
    let (v, _) = camera_motion_augment(&[img], track, frames, out)?;
    Ok(v.iter().map(|f| f.pixels().iter().map(|p| p[0] >= 0.5).collect()).collect())
}

/// One lighting-rich clip: the stack relit by `env`, then moved along `track`.
#[allow(clippy::too_many_arguments)]
pub fn lighting_rich_record(
    stack: &OlatStack,
    env: RadianceMap,
    rig: &LightRig,
    track: &MotionTrack,
    frames: usize,
    out: (usize, usize),
    id: String,
    group: String,
) -> Result<ClipRecord> {
    let (albedo, flows) = camera_motion_augment(std::slice::from_ref(&stack.albedo), track, frames, out)?;
    let masks = augment_mask(&stack.hit_mask, stack.dims(), track, frames, out)?;
    let lit_src = compose_relight(stack, &rig.project(&env)?)?;
    let (lit, _) = camera_motion_augment(&[lit_src], track, frames, out)?;
    let record = ClipRecord {
        id,
        source: ClipSource::LightingRich,
        group,
        lit,
        albedo,
        env: Some(env),
        ref_pool: (0..frames).collect(),
        flows: Some(flows),
        masks: Some(masks),
    };
    record.validate()?;
    Ok(record)
}

/// Pairs every stack with `pairs_per_stack` randomly chosen (and optionally
/// yaw-rotated) environments. One motion track per stack, so all pairings of
/// a stack share the same albedo video.
pub fn build_lighting_rich(
    stacks: &[OlatStack],
    envs: &[RadianceMap],
    rig: &LightRig,
    cfg: &LightingRichConfig,
    seed: u64,
) -> Result<Vec<ClipRecord>> {
    if stacks.is_empty() {
        return Err(Error::InvalidArgument("no OLAT stacks to build from".into()));
    }
    if envs.is_empty() {
        return Err(Error::InvalidArgument("no environment maps to pair with".into()));
    }
    if let Some(s) = stacks.iter().find(|s| s.rig_id != rig.id()) {
        return Err(Error::InvalidArgument(format!(
            "stack {} was rendered with rig {}, not {}",
            s.scene_id,
            s.rig_id,
            rig.id()
        )));
    }
    let out = (cfg.out_width, cfg.out_height);
    let per_stack: Vec<Vec<ClipRecord>> = stacks
        .par_iter()
        .enumerate()
        .map(|(si, stack)| -> Result<Vec<ClipRecord>> {
            let mut rng = rng_for(seed, si as u64);
            let track = cfg.motion.sample(cfg.frames, &mut rng);
            let group = format!("{}#{si}", stack.scene_id);
            (0..cfg.pairs_per_stack)
                .map(|pi| {
                    let mut prng = rng_for(seed, ((si as u64) << 32) | (pi as u64 + 1));
                    let env = &envs[prng.random_range(0..envs.len())];
                    let env = if cfg.rotate_envs {
                        rotate_env(env, prng.random_range(0.0..std::f64::consts::TAU))?
                    } else {
                        env.clone()
                    };
                    let id = format!("dl-{si:03}-{pi:02}");
                    lighting_rich_record(stack, env, rig, &track, cfg.frames, out, id, group.clone())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_stack.into_iter().flatten().collect())
}

/// Frame-level albedo predictor used to label motion-rich clips.
pub trait Delighter: Sync {
    fn delight_frame(&self, clip: &MotionClip, frame: usize, rng: &mut ChaCha8Rng) -> Result<Image>;
}

/// Exact albedo times per-frame gain `u_f ~ U(1 − δ, 1 + δ)`: temporally
/// inconsistent pseudo-albedo with a known error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlickerOracle {
    pub delta: f64,
}

impl Default for FlickerOracle {
    fn default() -> Self {
        Self { delta: 0.1 }
    }
}

impl Delighter for FlickerOracle {
    fn delight_frame(&self, clip: &MotionClip, frame: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
        let albedo = clip
            .albedo
            .get(frame)
            .ok_or_else(|| Error::InvalidArgument(format!("frame {frame} outside clip")))?;
        if self.delta == 0.0 {
            return Ok(albedo.clone());
        }
        let u = rng.random_range(1.0 - self.delta..=1.0 + self.delta);
        Ok(albedo.scaled(u as f32))
    }
}

pub fn build_motion_rich(clips: &[MotionClip], delighter: &dyn Delighter, seed: u64) -> Result<Vec<ClipRecord>> {
    clips
        .par_iter()
        .enumerate()
        .map(|(ci, clip)| {
            let mut rng = rng_for(seed, ci as u64);
            let albedo = (0..clip.len())
                .map(|f| {
                    let a = delighter.delight_frame(clip, f, &mut rng)?;
                    if a.dims() != clip.lit[f].dims() {
                        return Err(Error::Shape(format!(
                            "delighter returned {:?} for a {:?} frame",
                            a.dims(),
                            clip.lit[f].dims()
                        )));
                    }
                    Ok(a)
                })
                .collect::<Result<Vec<_>>>()?;
            let record = ClipRecord {
                id: format!("dm-{ci:03}"),
                source: ClipSource::MotionRich,
                group: format!("{}#{ci}", clip.scene_id),
                lit: clip.lit.clone(),
                albedo,
                env: None,
                ref_pool: (0..clip.len()).collect(),
                flows: Some(clip.flows.clone()),
                masks: Some(clip.hit_masks.clone()),
            };
            record.validate()?;
            Ok(record)
        })
        .collect()
}
