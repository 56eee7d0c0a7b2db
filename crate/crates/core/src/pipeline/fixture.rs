//! Small deterministic corpora for smoke runs and the overfit check.

use crate::dataset::{lighting_rich_record, ClipRecord, MotionTrack};
use crate::error::Result;
use crate::hdr::pixel_to_dir;
use crate::image::RadianceMap;
use crate::math::Vec3;
use crate::rig::{LightRig, RigPreset};
use crate::studio::{random_scene, render_olat};

/// Uniform base plus one sharp lobe around `toward`.
pub fn lobe_env(width: usize, height: usize, toward: Vec3, color: [f64; 3], base: f64) -> Result<RadianceMap> {
    let mu = toward.normalized();
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let d = pixel_to_dir(width, height, row, col)?;
            let lobe = (12.0 * (d.dot(mu) - 1.0)).exp();
            pixels.push(color.map(|c| (base + c * lobe) as f32));
        }
    }
    RadianceMap::new(width, height, pixels)
}

/// Two contrasting environments: warm light from the upper left and cool
/// light from the upper right.
pub fn contrast_envs(width: usize, height: usize) -> Result<[RadianceMap; 2]> {
    Ok([
        lobe_env(width, height, Vec3::new(-1.0, 0.8, 0.3), [6.0, 3.5, 1.5], 0.05)?,
        lobe_env(width, height, Vec3::new(1.0, 0.8, 0.3), [1.5, 3.0, 6.0], 0.05)?,
    ])
}

pub struct Fixture {
    pub rig: LightRig,
    pub envs: [RadianceMap; 2],
    /// `scenes × 2` records; record `2·s + e` is scene `s` under env `e`.
    pub records: Vec<ClipRecord>,
}

/// `scenes` random scenes, each relit by both contrast environments, with a
/// one-pixel-per-frame pan. Frames are `size × size`.
pub fn relight_fixture(scenes: usize, size: usize, frames: usize, seed: u64) -> Result<Fixture> {
    let rig = RigPreset::Desk.build(32, 16)?;
    let envs = contrast_envs(32, 16)?;
    let margin = frames;
    let track = MotionTrack {
        pan: [1.0, 0.0],
        zoom: 1.0,
    };
    let mut records = Vec::with_capacity(2 * scenes);
    for s in 0..scenes {
        let scene = random_scene(&format!("fixture-{s}"), seed.wrapping_add(s as u64), size + 2 * margin, size + 2 * margin, 1);
        let stack = render_olat(&scene, 0, &rig)?;
        for (e, env) in envs.iter().enumerate() {
            records.push(lighting_rich_record(
                &stack,
                env.clone(),
                &rig,
                &track,
                frames,
                (size, size),
                format!("fx-{s}-{e}"),
                format!("fixture-{s}"),
            )?);
        }
    }
    Ok(Fixture { rig, envs, records })
}
