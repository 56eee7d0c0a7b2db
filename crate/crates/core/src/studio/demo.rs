use rand::Rng;

use super::scene::{Animation, Camera, CameraKey, CameraTrack, Ground, ObjectMotion, SceneSpec, Sphere};
use crate::math::Vec3;
use crate::util::rng_for;

/// Random desk scene: one to three spheres resting on a ground plane, seen
/// from a fixed camera. With `frames > 1` the first sphere orbits and the
/// camera pans slowly over `[0, frames)`.
pub fn random_scene(id: &str, seed: u64, width: usize, height: usize, frames: u32) -> SceneSpec {
    let mut rng = rng_for(seed, 0x5ce4e);
    let count = rng.random_range(1..=3);
    let spheres: Vec<Sphere> = (0..count)
        .map(|_| {
            let radius = rng.random_range(0.4..0.9);
            Sphere {
                center: Vec3::new(rng.random_range(-1.2..1.2), -1.0 + radius, rng.random_range(-1.0..1.0)),
                radius,
                albedo: [0; 3].map(|_| rng.random_range(0.2..0.95)),
                specular: rng.random_range(0.0..0.3),
                shininess: rng.random_range(8.0..48.0),
            }
        })
        .collect();
    let ground = Ground {
        height: -1.0,
        albedo: [0; 3].map(|_| rng.random_range(0.3..0.7)),
    };
    let mut animation = Animation::default();
    if frames > 1 {
        let c = spheres[0].center;
        animation.objects.push(ObjectMotion::Orbit {
            object: 0,
            center: Vec3::new(0.0, c.y, 0.0),
            radius: (c.x * c.x + c.z * c.z).sqrt().max(0.5),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            radians_per_frame: rng.random_range(0.05..0.15),
        });
        let pan = [rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)];
        let last = frames - 1;
        animation.camera = Some(CameraTrack {
            keys: vec![
                CameraKey { frame: 0, pan: [0.0, 0.0], zoom: 1.0 },
                CameraKey {
                    frame: last,
                    pan: [pan[0] * last as f64, pan[1] * last as f64],
                    zoom: 1.0,
                },
            ],
        });
    }
    SceneSpec {
        id: id.into(),
        spheres,
        ground: Some(ground),
        camera: Camera {
            position: Vec3::new(0.0, 0.8, 5.0),
            look_at: Vec3::new(0.0, -0.3, 0.0),
            vfov: 0.75,
            width,
            height,
        },
        animation,
    }
}
