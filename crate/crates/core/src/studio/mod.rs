//! Deterministic synthetic studio: analytic scenes rendered under distant
//! directional lights, OLAT stacks, brute-force environment lighting and
//! animated clips with exact camera flow.

mod demo;
mod render;
mod scene;

pub use demo::random_scene;
pub use render::{
    occluded_pixel_count, render_directional, render_env_direct, render_olat, synth_motion_clip,
    ClipLighting, MotionClip, OlatStack,
};
pub use scene::{
    Animation, Camera, CameraKey, CameraTrack, FramePose, Ground, ObjectMotion, SceneSpec, Sphere,
    TranslateKey,
};

use serde::{Deserialize, Serialize};

/// Affine image-space motion `p' = scale·p + offset`, with `p` in continuous
/// pixel coordinates (pixel `(row, col)` has its center at `(col + 0.5, row + 0.5)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFlow {
    pub scale: f64,
    pub offset: [f64; 2],
}

impl AffineFlow {
    pub const IDENTITY: AffineFlow = AffineFlow {
        scale: 1.0,
        offset: [0.0, 0.0],
    };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.scale * p[0] + self.offset[0],
            self.scale * p[1] + self.offset[1],
        ]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.offset[0]) / self.scale,
            (p[1] - self.offset[1]) / self.scale,
        ]
    }

    /// Displacement at pixel center `(row, col)`.
    pub fn flow_at(&self, row: usize, col: usize) -> [f64; 2] {
        let p = [col as f64 + 0.5, row as f64 + 0.5];
        let q = self.apply(p);
        [q[0] - p[0], q[1] - p[1]]
    }
}
