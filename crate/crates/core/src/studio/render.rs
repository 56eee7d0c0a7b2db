use rayon::prelude::*;

use super::scene::{FramePose, SceneSpec};
use super::AffineFlow;
use crate::error::{Error, Result};
use crate::hdr::{pixel_solid_angle, pixel_to_dir};
use crate::image::{Image, RadianceMap};
use crate::math::Vec3;
use crate::rig::LightRig;

const HIT_EPS: f64 = 1e-9;
const SHADOW_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Hit {
    point: Vec3,
    normal: Vec3,
    view: Vec3,
    albedo: [f64; 3],
    specular: f64,
    shininess: f64,
}

/// Scene geometry at one frame.
struct Posed<'a> {
    scene: &'a SceneSpec,
    pose: FramePose,
}

impl Posed<'_> {
    fn new(scene: &SceneSpec, frame: u32) -> Result<Posed<'_>> {
        scene.validate()?;
        Ok(Posed {
            scene,
            pose: scene.pose_at(frame)?,
        })
    }

    fn sphere_t(&self, i: usize, o: Vec3, d: Vec3) -> Option<f64> {
        let c = self.pose.centers[i];
        let r = self.scene.spheres[i].radius;
        let oc = o - c;
        let b = oc.dot(d);
        let disc = b * b - (oc.dot(oc) - r * r);
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        [-b - s, -b + s].into_iter().find(|&t| t > HIT_EPS)
    }

    fn ground_t(&self, o: Vec3, d: Vec3) -> Option<f64> {
        let g = self.scene.ground.as_ref()?;
        if o.y <= g.height || d.y >= 0.0 {
            return None;
        }
        let t = (g.height - o.y) / d.y;
        (t > HIT_EPS).then_some(t)
    }

    fn trace(&self, o: Vec3, d: Vec3) -> Option<Hit> {
        let mut best: Option<(f64, Option<usize>)> = None;
        for i in 0..self.scene.spheres.len() {
            if let Some(t) = self.sphere_t(i, o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, Some(i)));
                }
            }
        }
        if let Some(t) = self.ground_t(o, d) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, None));
            }
        }
        let (t, obj) = best?;
        let point = o + d * t;
        Some(match obj {
            Some(i) => {
                let s = &self.scene.spheres[i];
                Hit {
                    point,
                    normal: (point - self.pose.centers[i]).normalized(),
                    view: -d,
                    albedo: s.albedo,
                    specular: s.specular,
                    shininess: s.shininess,
                }
            }
            None => {
                let g = self.scene.ground.as_ref().expect("ground hit without ground");
                Hit {
                    point,
                    normal: Vec3::UP,
                    view: -d,
                    albedo: g.albedo,
                    specular: 0.0,
                    shininess: 1.0,
                }
            }
        })
    }

    fn occluded(&self, o: Vec3, d: Vec3) -> bool {
        (0..self.scene.spheres.len()).any(|i| self.sphere_t(i, o, d).is_some())
            || self.ground_t(o, d).is_some()
    }

    fn primary_ray(&self, row: usize, col: usize) -> (Vec3, Vec3) {
        let cam = &self.scene.camera;
        let forward = (cam.look_at - cam.position).normalized();
        let mut right = forward.cross(Vec3::UP);
        if right.length() < 1e-12 {
            right = Vec3::new(1.0, 0.0, 0.0);
        }
        let right = right.normalized();
        let up = right.cross(forward);
        let focal = cam.height as f64 * 0.5 / (cam.vfov * 0.5).tan() * self.pose.zoom;
        let x = col as f64 + 0.5 - cam.width as f64 * 0.5 - self.pose.pan[0];
        let y = -(row as f64 + 0.5 - cam.height as f64 * 0.5 - self.pose.pan[1]);
        let d = (forward * focal + right * x + up * y).normalized();
        (cam.position, d)
    }

    fn gbuffer(&self) -> Vec<Option<Hit>> {
        let cam = &self.scene.camera;
        (0..cam.width * cam.height)
            .map(|p| {
                let (o, d) = self.primary_ray(p / cam.width, p % cam.width);
                self.trace(o, d)
            })
            .collect()
    }

    /// Shading coefficient per channel for unit intensity from direction `l`
    /// (pointing toward the light).
    fn coefficient(&self, hit: &Hit, l: Vec3) -> [f64; 3] {
        let ndl = hit.normal.dot(l);
        if ndl <= 0.0 || self.occluded(hit.point + hit.normal * SHADOW_OFFSET, l) {
            return [0.0; 3];
        }
        let h = (l + hit.view).normalized();
        let spec = hit.specular * hit.normal.dot(h).max(0.0).powf(hit.shininess);
        hit.albedo.map(|a| a * ndl + spec)
    }

    fn accumulate(&self, gbuf: &[Option<Hit>], l: Vec3, intensity: [f64; 3], acc: &mut [[f64; 3]]) {
        for (hit, out) in gbuf.iter().zip(acc.iter_mut()) {
            if let Some(hit) = hit {
                let k = self.coefficient(hit, l);
                for c in 0..3 {
                    out[c] += k[c] * intensity[c];
                }
            }
        }
    }
}

fn to_image(width: usize, height: usize, acc: &[[f64; 3]]) -> Result<Image> {
    Image::new(width, height, acc.iter().map(|p| p.map(|v| v as f32)).collect())
}

fn check_unit(d: Vec3) -> Result<()> {
    if (d.length() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "light direction {d:?} is not unit length"
        )));
    }
    Ok(())
}

/// Renders one distant light. `light_dir` points from the scene toward the
/// light; shading is Lambert plus Blinn-Phong with a binary hard shadow.
/// Output is linear in `intensity`.
pub fn render_directional(
    scene: &SceneSpec,
    frame: u32,
    light_dir: Vec3,
    intensity: [f64; 3],
) -> Result<Image> {
    check_unit(light_dir)?;
    let posed = Posed::new(scene, frame)?;
    let gbuf = posed.gbuffer();
    let mut acc = vec![[0.0; 3]; gbuf.len()];
    posed.accumulate(&gbuf, light_dir, intensity, &mut acc);
    to_image(scene.camera.width, scene.camera.height, &acc)
}

/// Every nonzero map pixel becomes a directional light of intensity
/// `L(p)·ΔΩ(p)`; contributions are summed in ascending pixel order.
/// Cost is O(map pixels × image pixels).
pub fn render_env_direct(scene: &SceneSpec, frame: u32, map: &RadianceMap) -> Result<Image> {
    let posed = Posed::new(scene, frame)?;
    let gbuf = posed.gbuffer();
    let mut acc = vec![[0.0; 3]; gbuf.len()];
    let (w, h) = map.dims();
    for row in 0..h {
        let omega = pixel_solid_angle(w, h, row);
        for col in 0..w {
            let l = map.get(row, col);
            if l == [0.0; 3] {
                continue;
            }
            let d = pixel_to_dir(w, h, row, col)?;
            posed.accumulate(&gbuf, d, l.map(|v| v as f64 * omega), &mut acc);
        }
    }
    to_image(scene.camera.width, scene.camera.height, &acc)
}

/// Per-light renders of one scene pose plus its flat albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct OlatStack {
    pub scene_id: String,
    pub rig_id: String,
    pub frame: u32,
    /// Image `i` is lit from rig direction `i` with intensity `cell_solid_angle[i]`.
    pub images: Vec<Image>,
    pub cell_solid_angle: Vec<f64>,
    pub albedo: Image,
    pub hit_mask: Vec<bool>,
    pub pan: [f64; 2],
    pub zoom: f64,
}

impl OlatStack {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.albedo.dims()
    }
}

fn albedo_image(width: usize, height: usize, gbuf: &[Option<Hit>]) -> Result<Image> {
    Image::new(
        width,
        height,
        gbuf.iter()
            .map(|h| h.map_or([0.0; 3], |h| h.albedo.map(|a| a as f32)))
            .collect(),
    )
}

pub fn render_olat(scene: &SceneSpec, frame: u32, rig: &LightRig) -> Result<OlatStack> {
    let posed = Posed::new(scene, frame)?;
    let gbuf = posed.gbuffer();
    let (w, h) = (scene.camera.width, scene.camera.height);
    let images = rig
        .directions()
        .par_iter()
        .zip(rig.cell_solid_angle().par_iter())
        .map(|(&dir, &omega)| {
            let mut acc = vec![[0.0; 3]; gbuf.len()];
            posed.accumulate(&gbuf, dir, [omega; 3], &mut acc);
            to_image(w, h, &acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OlatStack {
        scene_id: scene.id.clone(),
        rig_id: rig.id().to_string(),
        frame,
        images,
        cell_solid_angle: rig.cell_solid_angle().to_vec(),
        albedo: albedo_image(w, h, &gbuf)?,
        hit_mask: gbuf.iter().map(Option::is_some).collect(),
        pan: posed.pose.pan,
        zoom: posed.pose.zoom,
    })
}

/// Number of pixels whose surface faces `light_dir` but is blocked from it.
pub fn occluded_pixel_count(scene: &SceneSpec, frame: u32, light_dir: Vec3) -> Result<usize> {
    check_unit(light_dir)?;
    let posed = Posed::new(scene, frame)?;
    Ok(posed
        .gbuffer()
        .iter()
        .flatten()
        .filter(|h| {
            h.normal.dot(light_dir) > 0.0
                && posed.occluded(h.point + h.normal * SHADOW_OFFSET, light_dir)
        })
        .count())
}

pub enum ClipLighting<'a> {
    /// Brute-force per-pixel environment lighting (small maps only).
    Direct(&'a RadianceMap),
    /// Compose per-frame OLAT renders with the map projected onto the rig.
    Olat(&'a LightRig, &'a RadianceMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub scene_id: String,
    pub lit: Vec<Image>,
    pub albedo: Vec<Image>,
    pub hit_masks: Vec<Vec<bool>>,
    /// `flows[i]` maps frame `i` content to frame `i + 1`.
    pub flows: Vec<AffineFlow>,
}

impl MotionClip {
    pub fn len(&self) -> usize {
        self.lit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lit.is_empty()
    }
}

pub(crate) fn camera_flow(scene: &SceneSpec, a: &FramePose, b: &FramePose) -> AffineFlow {
    let c = [
        scene.camera.width as f64 * 0.5,
        scene.camera.height as f64 * 0.5,
    ];
    let s = b.zoom / a.zoom;
    AffineFlow {
        scale: s,
        offset: [
            c[0] + b.pan[0] - s * (c[0] + a.pan[0]),
            c[1] + b.pan[1] - s * (c[1] + a.pan[1]),
        ],
    }
}

pub fn synth_motion_clip(
    scene: &SceneSpec,
    frames: std::ops::Range<u32>,
    lighting: ClipLighting<'_>,
) -> Result<MotionClip> {
    scene.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty frame range".into()));
    }
    if let Some((lo, hi)) = scene.frame_range() {
        if frames.start < lo || frames.end - 1 > hi {
            return Err(Error::InvalidArgument(format!(
                "frames {frames:?} fall outside the animation tracks [{lo}, {hi}]"
            )));
        }
    }
    let (w, h) = (scene.camera.width, scene.camera.height);
    let weights = match &lighting {
        ClipLighting::Olat(rig, map) => Some(rig.project(map)?),
        ClipLighting::Direct(_) => None,
    };
    let per_frame = frames
        .clone()
        .into_par_iter()
        .map(|f| -> Result<_> {
            let posed = Posed::new(scene, f)?;
            let gbuf = posed.gbuffer();
            let lit = match &lighting {
                ClipLighting::Direct(map) => render_env_direct(scene, f, map)?,
                ClipLighting::Olat(rig, _) => {
                    let stack = render_olat(scene, f, rig)?;
                    crate::dataset::compose_relight(&stack, weights.as_ref().expect("weights"))?
                }
            };
            Ok((
                lit,
                albedo_image(w, h, &gbuf)?,
                gbuf.iter().map(Option::is_some).collect::<Vec<_>>(),
                posed.pose,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let flows = per_frame
        .windows(2)
        .map(|p| camera_flow(scene, &p[0].3, &p[1].3))
        .collect();
    let mut clip = MotionClip {
        scene_id: scene.id.clone(),
        lit: Vec::new(),
        albedo: Vec::new(),
        hit_masks: Vec::new(),
        flows,
    };
    for (lit, albedo, mask, _) in per_frame {
        clip.lit.push(lit);
        clip.albedo.push(albedo);
        clip.hit_masks.push(mask);
    }
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::{Coverage, Layout};
    use crate::studio::scene::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_scene(width: usize, height: usize) -> SceneSpec {
        SceneSpec {
            id: "s".into(),
            spheres: vec![Sphere {
                center: Vec3::ZERO,
                radius: 1.0,
                albedo: [1.0, 1.0, 1.0],
                specular: 0.0,
                shininess: 8.0,
            }],
            ground: None,
            camera: Camera {
                position: Vec3::new(0.0, 0.0, 5.0),
                look_at: Vec3::ZERO,
                vfov: 0.6,
                width,
                height,
            },
            animation: Animation::default(),
        }
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> SceneSpec {
        let n = rng.random_range(1..4);
        let spheres = (0..n)
            .map(|_| Sphere {
                center: Vec3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-0.5..1.0),
                    rng.random_range(-1.5..1.5),
                ),
                radius: rng.random_range(0.3..0.9),
                albedo: [rng.random(), rng.random(), rng.random()],
                specular: rng.random_range(0.0..0.5),
                shininess: rng.random_range(1.0..64.0),
            })
            .collect();
        SceneSpec {
            id: "random".into(),
            spheres,
            ground: Some(Ground {
                height: -1.0,
                albedo: [0.5, 0.5, 0.5],
            }),
            camera: Camera {
                position: Vec3::new(0.0, 1.5, 6.0),
                look_at: Vec3::ZERO,
                vfov: 0.9,
                width: 24,
                height: 24,
            },
            animation: Animation::default(),
        }
    }

    #[test]
    fn head_on_light_gives_unit_radiance_at_the_center() {
        // odd dims put a pixel center exactly on the optical axis
        let scene = sphere_scene(9, 9);
        let img = render_directional(&scene, 0, Vec3::new(0.0, 0.0, 1.0), [1.0; 3]).unwrap();
        let c = img.get(4, 4);
        for v in c {
            assert!((v - 1.0).abs() < 1e-6, "{c:?}");
        }
    }

    #[test]
    fn back_light_gives_no_diffuse() {
        let scene = sphere_scene(9, 9);
        let img = render_directional(&scene, 0, Vec3::new(0.0, 0.0, -1.0), [1.0; 3]).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn rejects_non_unit_light() {
        let scene = sphere_scene(4, 4);
        assert!(render_directional(&scene, 0, Vec3::new(0.0, 0.0, 2.0), [1.0; 3]).is_err());
    }

    #[test]
    fn renders_are_linear_in_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..8 {
            let scene = random_scene(&mut rng);
            let l = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0), rng.random_range(-1.0..1.0)).normalized();
            let i1 = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let i2 = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let a = render_directional(&scene, 0, l, i1).unwrap();
            let b = render_directional(&scene, 0, l, i2).unwrap();
            let s = render_directional(&scene, 0, l, [i1[0] + i2[0], i1[1] + i2[1], i1[2] + i2[2]]).unwrap();
            for ((pa, pb), ps) in a.pixels().iter().zip(b.pixels()).zip(s.pixels()) {
                for c in 0..3 {
                    let sum = pa[c] + pb[c];
                    assert!((sum - ps[c]).abs() <= 1e-6 * ps[c].abs().max(1e-30), "{sum} vs {}", ps[c]);
                }
            }
            // doubling is exact in binary floating point
            let d = render_directional(&scene, 0, l, [2.0 * i1[0], 2.0 * i1[1], 2.0 * i1[2]]).unwrap();
            assert_eq!(d, a.scaled(2.0));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = random_scene(&mut rng);
        let l = Vec3::new(0.3, 0.8, 0.2).normalized();
        let a = render_directional(&scene, 0, l, [1.0; 3]).unwrap();
        let b = render_directional(&scene, 0, l, [1.0; 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn black_scene_gives_black_stack() {
        let mut scene = sphere_scene(8, 8);
        scene.spheres[0].albedo = [0.0; 3];
        let rig = crate::rig::RigPreset::Desk.build(32, 16).unwrap();
        let stack = render_olat(&scene, 0, &rig).unwrap();
        assert_eq!(stack.len(), 16);
        assert!(stack.images.iter().all(|i| i.max_abs() == 0.0));
    }

    #[test]
    fn single_light_stack_uses_four_pi() {
        let scene = sphere_scene(9, 9);
        let rig = LightRig::from_directions(vec![Vec3::new(0.0, 0.0, 1.0)], Coverage::Full, 8, 4).unwrap();
        let stack = render_olat(&scene, 0, &rig).unwrap();
        let direct = render_directional(&scene, 0, Vec3::new(0.0, 0.0, 1.0), [4.0 * std::f64::consts::PI; 3]).unwrap();
        assert_eq!(stack.images[0], direct);
        assert!((stack.images[0].get(4, 4)[0] as f64 - 4.0 * std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn stack_albedo_matches_scene_albedo_on_hits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scene = random_scene(&mut rng);
        let rig = crate::rig::RigPreset::Desk.build(32, 16).unwrap();
        let stack = render_olat(&scene, 0, &rig).unwrap();
        let posed = Posed::new(&scene, 0).unwrap();
        for (p, hit) in posed.gbuffer().iter().enumerate() {
            let a = stack.albedo.pixels()[p];
            match hit {
                Some(h) => assert_eq!(a, h.albedo.map(|v| v as f32)),
                None => assert_eq!(a, [0.0; 3]),
            }
            assert_eq!(stack.hit_mask[p], hit.is_some());
        }
    }

    #[test]
    fn single_pixel_cell_delta_matches_directional_render() {
        let (rows, per_row) = (4, 4);
        let rig = LightRig::build(16, Layout::Cylindrical { rows, lights_per_row: per_row }, Coverage::Full, 4, 4).unwrap();
        assert!(rig.cell_solid_angle().iter().enumerate().all(|(i, _)| {
            rig.cell_of_pixel().iter().filter(|c| **c == Some(i as u32)).count() == 1
        }));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scene = random_scene(&mut rng);
        for i in [0usize, 5, 10] {
            let env = rig.delta_env(i, [1.0; 3]).unwrap();
            let direct = render_env_direct(&scene, 0, &env).unwrap();
            let p = rig.cell_of_pixel().iter().position(|c| *c == Some(i as u32)).unwrap();
            let d = pixel_to_dir(4, 4, p / 4, p % 4).unwrap();
            let intensity = env.pixels()[p][0] as f64 * pixel_solid_angle(4, 4, p / 4);
            let single = render_directional(&scene, 0, d, [intensity; 3]).unwrap();
            assert_eq!(direct, single);
        }
    }

    #[test]
    fn env_direct_equals_resummed_directional_renders() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = random_scene(&mut rng);
        let (w, h) = (8, 4);
        let pixels = (0..w * h).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).collect();
        let env = RadianceMap::new(w, h, pixels).unwrap();
        let direct = render_env_direct(&scene, 0, &env).unwrap();
        let mut acc = vec![[0.0f64; 3]; 24 * 24];
        for row in 0..h {
            for col in 0..w {
                let d = pixel_to_dir(w, h, row, col).unwrap();
                let l = env.get(row, col);
                let omega = pixel_solid_angle(w, h, row);
                // unit-intensity render scaled afterwards: linear in intensity
                let unit = render_directional(&scene, 0, d, [1.0; 3]).unwrap();
                for (a, u) in acc.iter_mut().zip(unit.pixels()) {
                    for c in 0..3 {
                        a[c] += u[c] as f64 * l[c] as f64 * omega;
                    }
                }
            }
        }
        for (a, b) in direct.pixels().iter().zip(&acc) {
            for c in 0..3 {
                assert!((a[c] as f64 - b[c]).abs() <= 1e-5 * b[c].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn static_clip_frames_are_identical() {
        let scene = sphere_scene(8, 8);
        let env = RadianceMap::uniform(8, 4, [0.5; 3]).unwrap();
        let clip = synth_motion_clip(&scene, 0..4, ClipLighting::Direct(&env)).unwrap();
        assert_eq!(clip.len(), 4);
        for f in 1..4 {
            assert_eq!(clip.lit[f], clip.lit[0]);
            assert_eq!(clip.albedo[f], clip.albedo[0]);
            assert_eq!(clip.flows[f - 1], AffineFlow::IDENTITY);
        }
    }

    #[test]
    fn camera_pan_yields_constant_flow_and_shifted_pixels() {
        let mut scene = sphere_scene(16, 12);
        scene.animation.camera = Some(CameraTrack {
            keys: vec![
                CameraKey { frame: 0, pan: [0.0, 0.0], zoom: 1.0 },
                CameraKey { frame: 3, pan: [6.0, 0.0], zoom: 1.0 },
            ],
        });
        let env = RadianceMap::uniform(8, 4, [0.5; 3]).unwrap();
        let clip = synth_motion_clip(&scene, 0..4, ClipLighting::Direct(&env)).unwrap();
        for flow in &clip.flows {
            for (r, c) in [(0, 0), (5, 7), (11, 15)] {
                assert_eq!(flow.flow_at(r, c), [2.0, 0.0]);
            }
        }
        for f in 0..3 {
            for row in 0..12 {
                for col in 0..14 {
                    assert_eq!(clip.lit[f + 1].get(row, col + 2), clip.lit[f].get(row, col));
                }
            }
        }
        assert!(synth_motion_clip(&scene, 2..5, ClipLighting::Direct(&env)).is_err());
    }

    #[test]
    fn zoom_flow_scales_about_the_center() {
        let mut scene = sphere_scene(16, 16);
        scene.animation.camera = Some(CameraTrack {
            keys: vec![
                CameraKey { frame: 0, pan: [0.0, 0.0], zoom: 1.0 },
                CameraKey { frame: 1, pan: [0.0, 0.0], zoom: 2.0 },
            ],
        });
        let a = scene.pose_at(0).unwrap();
        let b = scene.pose_at(1).unwrap();
        let flow = camera_flow(&scene, &a, &b);
        assert_eq!(flow.apply([8.0, 8.0]), [8.0, 8.0]);
        assert_eq!(flow.apply([0.0, 0.0]), [-8.0, -8.0]);
    }

    #[test]
    fn approaching_orbit_grows_the_shadow_monotonically() {
        // sphere travels half an orbit from behind the center toward the camera
        // under an overhead light; perspective enlarges its ground shadow
        let mut scene = sphere_scene(48, 48);
        scene.spheres[0].radius = 0.5;
        scene.spheres[0].center = Vec3::new(0.0, 0.0, 0.0);
        scene.ground = Some(Ground { height: -0.6, albedo: [0.7; 3] });
        scene.camera.position = Vec3::new(0.0, 3.0, 6.0);
        scene.camera.look_at = Vec3::new(0.0, -0.6, 0.0);
        scene.camera.vfov = 1.0;
        scene.animation.objects.push(ObjectMotion::Orbit {
            object: 0,
            center: Vec3::ZERO,
            radius: 2.0,
            phase: -std::f64::consts::FRAC_PI_2,
            radians_per_frame: std::f64::consts::PI / 8.0,
        });
        let light = Vec3::new(0.0, 1.0, 0.0);
        let counts: Vec<usize> = (0..=8)
            .map(|f| occluded_pixel_count(&scene, f, light).unwrap())
            .collect();
        assert!(counts[0] > 0);
        for w in counts.windows(2) {
            assert!(w[1] >= w[0], "{counts:?}");
        }
        assert!(counts[8] > counts[0]);
    }
}
