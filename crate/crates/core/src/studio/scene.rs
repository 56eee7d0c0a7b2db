use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub albedo: [f64; 3],
    #[serde(default)]
    pub specular: f64,
    #[serde(default = "default_shininess")]
    pub shininess: f64,
}

fn default_shininess() -> f64 {
    16.0
}

/// Horizontal plane `y = height`, lit from above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    pub height: f64,
    pub albedo: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    /// Vertical field of view in radians.
    pub vfov: f64,
    pub width: usize,
    pub height: usize,
}

/// Image-space camera motion: `pan` shifts content by that many pixels,
/// `zoom` scales the focal length about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraKey {
    pub frame: u32,
    #[serde(default)]
    pub pan: [f64; 2],
    #[serde(default = "one")]
    pub zoom: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraTrack {
    pub keys: Vec<CameraKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslateKey {
    pub frame: u32,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObjectMotion {
    /// Keyframed offset added to the sphere's rest center.
    Translate { object: usize, keys: Vec<TranslateKey> },
    /// Horizontal circle about `center`; replaces the rest center's x/z.
    Orbit {
        object: usize,
        center: Vec3,
        radius: f64,
        phase: f64,
        radians_per_frame: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Animation {
    #[serde(default)]
    pub camera: Option<CameraTrack>,
    #[serde(default)]
    pub objects: Vec<ObjectMotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: String,
    #[serde(default)]
    pub spheres: Vec<Sphere>,
    #[serde(default)]
    pub ground: Option<Ground>,
    pub camera: Camera,
    #[serde(default)]
    pub animation: Animation,
}

/// Evaluated animation state for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePose {
    pub pan: [f64; 2],
    pub zoom: f64,
    pub centers: Vec<Vec3>,
}

fn check_keys(frames: impl Iterator<Item = u32>, what: &str) -> Result<()> {
    let frames: Vec<u32> = frames.collect();
    if frames.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} has no keyframes")));
    }
    if frames.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{what} keyframes must be strictly increasing"
        )));
    }
    Ok(())
}

/// Piecewise-linear interpolation over keyframes; `None` outside the keyed range.
fn interpolate<T: Copy>(
    keys: &[(u32, T)],
    frame: u32,
    lerp: impl Fn(T, T, f64) -> T,
) -> Option<T> {
    let first = keys.first()?;
    let last = keys.last()?;
    if frame < first.0 || frame > last.0 {
        return None;
    }
    for pair in keys.windows(2) {
        let (f0, a) = pair[0];
        let (f1, b) = pair[1];
        if frame >= f0 && frame <= f1 {
            if frame == f0 {
                return Some(a);
            }
            if frame == f1 {
                return Some(b);
            }
            return Some(lerp(a, b, (frame - f0) as f64 / (f1 - f0) as f64));
        }
    }
    Some(first.1)
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.spheres.is_empty() && self.ground.is_none() {
            return Err(Error::InvalidArgument("scene has no objects".into()));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::InvalidArgument(format!("sphere {i} radius must be > 0")));
            }
            if s.albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::InvalidArgument(format!("sphere {i} albedo outside [0, 1]")));
            }
            if !(s.specular >= 0.0) || !(s.shininess >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sphere {i} needs specular >= 0 and shininess >= 1"
                )));
            }
        }
        if let Some(g) = &self.ground {
            if g.albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::InvalidArgument("ground albedo outside [0, 1]".into()));
            }
        }
        let cam = &self.camera;
        if !(cam.vfov > 0.0 && cam.vfov < std::f64::consts::PI) {
            return Err(Error::InvalidArgument("field of view must lie in (0, π)".into()));
        }
        if cam.width == 0 || cam.height == 0 {
            return Err(Error::InvalidArgument("camera image dims must be positive".into()));
        }
        if (cam.look_at - cam.position).length() == 0.0 {
            return Err(Error::InvalidArgument("camera looks at its own position".into()));
        }
        if let Some(track) = &self.animation.camera {
            check_keys(track.keys.iter().map(|k| k.frame), "camera track")?;
            if track.keys.iter().any(|k| !(k.zoom > 0.0)) {
                return Err(Error::InvalidArgument("camera zoom must be positive".into()));
            }
        }
        for m in &self.animation.objects {
            let object = match m {
                ObjectMotion::Translate { object, keys } => {
                    check_keys(keys.iter().map(|k| k.frame), "object track")?;
                    *object
                }
                ObjectMotion::Orbit { object, .. } => *object,
            };
            if object >= self.spheres.len() {
                return Err(Error::InvalidArgument(format!(
                    "animation references missing sphere {object}"
                )));
            }
        }
        Ok(())
    }

    /// Frames covered by every keyframed track; `None` when unconstrained.
    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let mut range: Option<(u32, u32)> = None;
        let mut narrow = |lo: u32, hi: u32| {
            range = Some(match range {
                None => (lo, hi),
                Some((a, b)) => (a.max(lo), b.min(hi)),
            });
        };
        if let Some(track) = &self.animation.camera {
            if let (Some(a), Some(b)) = (track.keys.first(), track.keys.last()) {
                narrow(a.frame, b.frame);
            }
        }
        for m in &self.animation.objects {
            if let ObjectMotion::Translate { keys, .. } = m {
                if let (Some(a), Some(b)) = (keys.first(), keys.last()) {
                    narrow(a.frame, b.frame);
                }
            }
        }
        range
    }

    pub fn pose_at(&self, frame: u32) -> Result<FramePose> {
        let out_of_range = || {
            Error::InvalidArgument(format!(
                "frame {frame} lies outside the animation tracks {:?}",
                self.frame_range()
            ))
        };
        let (pan, zoom) = match &self.animation.camera {
            None => ([0.0, 0.0], 1.0),
            Some(track) => {
                let keys: Vec<(u32, ([f64; 2], f64))> =
                    track.keys.iter().map(|k| (k.frame, (k.pan, k.zoom))).collect();
                interpolate(&keys, frame, |a, b, s| {
                    (
                        [a.0[0] + (b.0[0] - a.0[0]) * s, a.0[1] + (b.0[1] - a.0[1]) * s],
                        a.1 + (b.1 - a.1) * s,
                    )
                })
                .ok_or_else(out_of_range)?
            }
        };
        let mut centers: Vec<Vec3> = self.spheres.iter().map(|s| s.center).collect();
        for m in &self.animation.objects {
            match m {
                ObjectMotion::Translate { object, keys } => {
                    let keys: Vec<(u32, Vec3)> = keys.iter().map(|k| (k.frame, k.offset)).collect();
                    let off = interpolate(&keys, frame, |a, b, s| a + (b - a) * s)
                        .ok_or_else(out_of_range)?;
                    centers[*object] += off;
                }
                ObjectMotion::Orbit {
                    object,
                    center,
                    radius,
                    phase,
                    radians_per_frame,
                } => {
                    let angle = phase + radians_per_frame * frame as f64;
                    let c = &mut centers[*object];
                    c.x = center.x + radius * angle.cos();
                    c.z = center.z + radius * angle.sin();
                }
            }
        }
        Ok(FramePose { pan, zoom, centers })
    }
}
