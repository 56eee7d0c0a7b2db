//! Virtual light stage.
//!
//! A rig is a set of distant light directions plus a nearest-direction
//! partition of an equirectangular map's pixels into one cell per light.
//! Projecting an environment onto the rig integrates radiance over each cell,
//! which serves both as image-based relighting weights and as light tokens.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdr::{pixel_solid_angle, pixel_to_dir};
use crate::image::RadianceMap;
use crate::math::Vec3;
use crate::util::hash_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Layout {
    Fibonacci,
    /// `rows` elevation bands at polar angles `π(r + 0.5)/rows`, each with
    /// `lights_per_row` lights at azimuths `2π(j + 0.5)/n − π`.
    Cylindrical { rows: usize, lights_per_row: usize },
    /// Directions supplied explicitly in the manifest.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coverage {
    Full,
    /// Only the camera-facing hemisphere (`d.z < 0`) is partitioned.
    Frontal,
}

/// Serializable description from which a rig is rebuilt deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigManifest {
    pub n_lights: usize,
    pub layout: Layout,
    pub coverage: Coverage,
    pub width: usize,
    pub height: usize,
    pub directions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RigPreset {
    /// 16 lights, Fibonacci, full sphere.
    Desk,
    /// 110 lights, Fibonacci, full sphere.
    Stage,
}

impl RigPreset {
    pub fn build(self, width: usize, height: usize) -> Result<LightRig> {
        let n = match self {
            RigPreset::Desk => 16,
            RigPreset::Stage => 110,
        };
        LightRig::build(n, Layout::Fibonacci, Coverage::Full, width, height)
    }
}

#[derive(Debug, Clone)]
pub struct LightRig {
    manifest: RigManifest,
    id: String,
    directions: Vec<Vec3>,
    cell_of_pixel: Vec<Option<u32>>,
    cell_solid_angle: Vec<f64>,
    cell_mean_dir: Vec<Vec3>,
}

/// Per-light RGB radiance·steradian sums.
#[derive(Debug, Clone, PartialEq)]
pub struct LightWeights(pub Vec<[f64; 3]>);

impl LightWeights {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for w in &self.0 {
            for c in 0..3 {
                acc[c] += w[c];
            }
        }
        acc
    }
}

fn layout_directions(n: usize, layout: Layout, coverage: Coverage) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::InvalidArgument("a rig needs at least one light".into()));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    match layout {
        Layout::Fibonacci => Ok((0..n)
            .map(|i| {
                let f = (i as f64 + 0.5) / n as f64;
                let phi = golden * i as f64;
                match coverage {
                    Coverage::Full => {
                        let y = 1.0 - 2.0 * f;
                        let r = (1.0 - y * y).max(0.0).sqrt();
                        Vec3::new(r * phi.cos(), y, r * phi.sin())
                    }
                    Coverage::Frontal => {
                        let z = -f;
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        Vec3::new(r * phi.cos(), r * phi.sin(), z)
                    }
                }
            })
            .collect()),
        Layout::Cylindrical {
            rows,
            lights_per_row,
        } => {
            if rows * lights_per_row != n {
                return Err(Error::InvalidArgument(format!(
                    "cylindrical layout {rows}x{lights_per_row} does not hold {n} lights"
                )));
            }
            let mut dirs = Vec::with_capacity(n);
            for r in 0..rows {
                let v = (r as f64 + 0.5) / rows as f64;
                for j in 0..lights_per_row {
                    let u = (j as f64 + 0.5) / lights_per_row as f64;
                    dirs.push(crate::hdr::uv_to_dir(u, v));
                }
            }
            Ok(dirs)
        }
        Layout::Custom => Err(Error::InvalidArgument(
            "custom layouts need explicit directions".into(),
        )),
    }
}

impl LightRig {
    pub fn build(
        n_lights: usize,
        layout: Layout,
        coverage: Coverage,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let dirs = layout_directions(n_lights, layout, coverage)?;
        Self::from_parts(dirs, layout, coverage, width, height)
    }

    pub fn from_directions(
        directions: Vec<Vec3>,
        coverage: Coverage,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        Self::from_parts(directions, Layout::Custom, coverage, width, height)
    }

    pub fn from_manifest(manifest: &RigManifest) -> Result<Self> {
        let rig = match manifest.layout {
            Layout::Custom => Self::from_directions(
                manifest.directions.iter().map(|&d| d.into()).collect(),
                manifest.coverage,
                manifest.width,
                manifest.height,
            )?,
            layout => Self::build(
                manifest.n_lights,
                layout,
                manifest.coverage,
                manifest.width,
                manifest.height,
            )?,
        };
        if rig.manifest != *manifest {
            return Err(Error::InvalidArgument(
                "rig manifest does not match the directions its layout generates".into(),
            ));
        }
        Ok(rig)
    }

    fn from_parts(
        directions: Vec<Vec3>,
        layout: Layout,
        coverage: Coverage,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("map dimensions must be positive".into()));
        }
        let n = directions.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a rig needs at least one light".into()));
        }
        for (i, d) in directions.iter().enumerate() {
            if !((d.length() - 1.0).abs() <= 1e-6) {
                return Err(Error::InvalidArgument(format!(
                    "light {i} direction {d:?} is not unit length"
                )));
            }
            if directions[..i].iter().any(|o| o == d) {
                return Err(Error::InvalidArgument(format!("light {i} duplicates an earlier light")));
            }
        }

        let mut pixel_dirs = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixel_dirs.push(pixel_to_dir(width, height, row, col)?);
            }
        }
        let covered = |d: &Vec3| match coverage {
            Coverage::Full => true,
            Coverage::Frontal => d.z < 0.0,
        };
        let covered_count = pixel_dirs.iter().filter(|d| covered(d)).count();
        if n > covered_count {
            return Err(Error::InvalidArgument(format!(
                "{n} lights exceed the {covered_count} covered pixels of a {width}x{height} map"
            )));
        }

        let mut cell_of_pixel = Vec::with_capacity(width * height);
        let mut solid = vec![0.0f64; n];
        let mut mean = vec![Vec3::ZERO; n];
        for (p, d) in pixel_dirs.iter().enumerate() {
            if !covered(d) {
                cell_of_pixel.push(None);
                continue;
            }
            let mut best = 0usize;
            let mut best_dot = d.dot(directions[0]);
            for (i, l) in directions.iter().enumerate().skip(1) {
                let dot = d.dot(*l);
                if dot > best_dot {
                    best = i;
                    best_dot = dot;
                }
            }
            let omega = pixel_solid_angle(width, height, p / width);
            solid[best] += omega;
            mean[best] += *d * omega;
            cell_of_pixel.push(Some(best as u32));
        }
        if let Some(empty) = solid.iter().position(|&s| s == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "light {empty} owns no pixels at {width}x{height}; raise the map resolution"
            )));
        }
        let cell_mean_dir = mean.into_iter().map(Vec3::normalized).collect();

        let manifest = RigManifest {
            n_lights: n,
            layout,
            coverage,
            width,
            height,
            directions: directions.iter().map(|d| d.to_array()).collect(),
        };
        let id = hash_hex(&serde_json::to_vec(&manifest)?)[..16].to_string();
        Ok(Self {
            manifest,
            id,
            directions,
            cell_of_pixel,
            cell_solid_angle: solid,
            cell_mean_dir,
        })
    }

    pub fn manifest(&self) -> &RigManifest {
        &self.manifest
    }

    /// Content hash of the manifest.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn map_dims(&self) -> (usize, usize) {
        (self.manifest.width, self.manifest.height)
    }

    pub fn coverage(&self) -> Coverage {
        self.manifest.coverage
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn cell_of_pixel(&self) -> &[Option<u32>] {
        &self.cell_of_pixel
    }

    pub fn cell_solid_angle(&self) -> &[f64] {
        &self.cell_solid_angle
    }

    pub fn cell_mean_dir(&self) -> &[Vec3] {
        &self.cell_mean_dir
    }

    /// Solid angle of the partitioned region (4π for full coverage).
    pub fn covered_solid_angle(&self) -> f64 {
        let (w, h) = self.map_dims();
        self.cell_of_pixel
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some())
            .map(|(p, _)| pixel_solid_angle(w, h, p / w))
            .sum()
    }

    fn check_dims(&self, map: &RadianceMap) -> Result<()> {
        if map.dims() != self.map_dims() {
            return Err(Error::Shape(format!(
                "map is {:?} but the rig was built for {:?}",
                map.dims(),
                self.map_dims()
            )));
        }
        Ok(())
    }

    /// `w_i = Σ_{p ∈ cell_i} L(p)·ΔΩ(p)` per channel, ascending pixel order.
    /// Unassigned pixels contribute nothing.
    pub fn project(&self, map: &RadianceMap) -> Result<LightWeights> {
        self.check_dims(map)?;
        let (w, h) = self.map_dims();
        let mut weights = vec![[0.0f64; 3]; self.len()];
        for row in 0..h {
            let omega = pixel_solid_angle(w, h, row);
            for col in 0..w {
                if let Some(cell) = self.cell_of_pixel[row * w + col] {
                    let l = map.get(row, col);
                    let acc = &mut weights[cell as usize];
                    for c in 0..3 {
                        acc[c] += l[c] as f64 * omega;
                    }
                }
            }
        }
        Ok(LightWeights(weights))
    }

    /// Radiance `intensity / ΔΩ(cell_i)` spread uniformly over cell `i`.
    pub fn delta_env(&self, light: usize, intensity: [f64; 3]) -> Result<RadianceMap> {
        if light >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "light {light} out of range for a {}-light rig",
                self.len()
            )));
        }
        let mut per_cell = vec![[0.0; 3]; self.len()];
        let omega = self.cell_solid_angle[light];
        per_cell[light] = intensity.map(|v| v / omega);
        self.cellwise_constant_env(&per_cell)
    }

    /// Each covered pixel takes its cell's radiance; unassigned pixels are zero.
    pub fn cellwise_constant_env(&self, radiance: &[[f64; 3]]) -> Result<RadianceMap> {
        if radiance.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} cell radiances for a {}-light rig",
                radiance.len(),
                self.len()
            )));
        }
        let (w, h) = self.map_dims();
        let pixels = self
            .cell_of_pixel
            .iter()
            .map(|c| match c {
                Some(i) => radiance[*i as usize].map(|v| v as f32),
                None => [0.0; 3],
            })
            .collect();
        RadianceMap::new(w, h, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_light_owns_the_sphere() {
        let rig = LightRig::build(1, Layout::Fibonacci, Coverage::Full, 16, 8).unwrap();
        assert!(rig.cell_of_pixel().iter().all(|c| *c == Some(0)));
        assert!((rig.cell_solid_angle()[0] - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn antipodal_lights_split_at_the_equator() {
        let (w, h) = (64, 32);
        let rig = LightRig::from_directions(
            vec![Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, -1.0, 0.0)],
            Coverage::Full,
            w,
            h,
        )
        .unwrap();
        for row in 0..h {
            for col in 0..w {
                let expect = if row < h / 2 { 0 } else { 1 };
                assert_eq!(rig.cell_of_pixel()[row * w + col], Some(expect));
            }
        }
        for s in rig.cell_solid_angle() {
            assert!((s - 2.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn stage_preset_has_no_empty_cells() {
        let rig = RigPreset::Stage.build(256, 128).unwrap();
        assert_eq!(rig.len(), 110);
        let total: f64 = rig.cell_solid_angle().iter().sum();
        assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 1e-9);
        assert!(rig.cell_solid_angle().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn nearest_light_property_holds() {
        let rig = RigPreset::Desk.build(32, 16).unwrap();
        let (w, h) = rig.map_dims();
        for p in 0..w * h {
            let d = pixel_to_dir(w, h, p / w, p % w).unwrap();
            let assigned = rig.cell_of_pixel()[p].unwrap() as usize;
            let best = d.dot(rig.directions()[assigned]);
            for (i, l) in rig.directions().iter().enumerate() {
                let dot = d.dot(*l);
                assert!(dot <= best);
                if dot == best {
                    assert!(assigned <= i);
                }
            }
        }
    }

    #[test]
    fn mean_directions_are_unit_and_inside_their_cells() {
        let rig = RigPreset::Desk.build(64, 32).unwrap();
        for (i, m) in rig.cell_mean_dir().iter().enumerate() {
            assert!((m.length() - 1.0).abs() < 1e-9);
            assert!(m.dot(rig.directions()[i]) > 0.5);
        }
    }

    #[test]
    fn frontal_rig_leaves_the_back_unassigned() {
        let rig = LightRig::build(8, Layout::Fibonacci, Coverage::Frontal, 32, 16).unwrap();
        let (w, h) = rig.map_dims();
        for p in 0..w * h {
            let d = pixel_to_dir(w, h, p / w, p % w).unwrap();
            assert_eq!(rig.cell_of_pixel()[p].is_some(), d.z < 0.0);
        }
        assert!((rig.covered_solid_angle() - 2.0 * PI).abs() < 1e-9);
        let total: f64 = rig.cell_solid_angle().iter().sum();
        assert!((total - rig.covered_solid_angle()).abs() < 1e-9 * total);

        let ones = RadianceMap::uniform(w, h, [1.0; 3]).unwrap();
        let weights = rig.project(&ones).unwrap();
        assert!((weights.total()[0] - rig.covered_solid_angle()).abs() < 1e-9);
    }

    #[test]
    fn too_many_lights_is_an_error() {
        assert!(LightRig::build(9, Layout::Fibonacci, Coverage::Full, 4, 2).is_err());
        assert!(LightRig::build(4, Layout::Cylindrical { rows: 2, lights_per_row: 3 }, Coverage::Full, 8, 4).is_err());
        assert!(LightRig::from_directions(vec![Vec3::new(0.0, 2.0, 0.0)], Coverage::Full, 4, 2).is_err());
        let d = Vec3::new(0.0, 1.0, 0.0);
        assert!(LightRig::from_directions(vec![d, d], Coverage::Full, 4, 2).is_err());
    }

    #[test]
    fn uniform_map_projects_to_cell_solid_angles() {
        let rig = RigPreset::Desk.build(32, 16).unwrap();
        let ones = RadianceMap::uniform(32, 16, [1.0; 3]).unwrap();
        let w = rig.project(&ones).unwrap();
        for (wi, s) in w.0.iter().zip(rig.cell_solid_angle()) {
            assert!((wi[0] - s).abs() < 1e-12);
        }
        assert!((w.total()[1] - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_delta_projects_to_one_hot() {
        let rig = RigPreset::Desk.build(32, 16).unwrap();
        let (w, h) = rig.map_dims();
        let p = 5 * w + 7;
        let k = rig.cell_of_pixel()[p].unwrap() as usize;
        let mut pixels = vec![[0.0f32; 3]; w * h];
        pixels[p] = [3.0, 2.0, 1.0];
        let map = RadianceMap::new(w, h, pixels).unwrap();
        let weights = rig.project(&map).unwrap();
        let omega = pixel_solid_angle(w, h, 5);
        for (i, wi) in weights.0.iter().enumerate() {
            let expect = if i == k { [3.0 * omega, 2.0 * omega, omega] } else { [0.0; 3] };
            assert_eq!(*wi, expect);
        }
    }

    #[test]
    fn delta_env_round_trips_and_adds_linearly() {
        let rig = RigPreset::Desk.build(64, 32).unwrap();
        for i in 0..rig.len() {
            let w = rig.project(&rig.delta_env(i, [1.0; 3]).unwrap()).unwrap();
            for (j, wj) in w.0.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((wj[0] - e).abs() < 1e-6, "light {i}/{j}: {wj:?}");
            }
        }
        let a = rig.delta_env(2, [1.0, 0.0, 0.5]).unwrap();
        let b = rig.delta_env(7, [0.0, 2.0, 0.5]).unwrap();
        let sum = RadianceMap::new(
            64,
            32,
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| [x[0] + y[0], x[1] + y[1], x[2] + y[2]])
                .collect(),
        )
        .unwrap();
        let (wa, wb, ws) = (
            rig.project(&a).unwrap(),
            rig.project(&b).unwrap(),
            rig.project(&sum).unwrap(),
        );
        for i in 0..rig.len() {
            for c in 0..3 {
                assert_eq!(ws.0[i][c], wa.0[i][c] + wb.0[i][c]);
            }
        }
        assert!(rig.delta_env(16, [1.0; 3]).is_err());
    }

    #[test]
    fn projection_conserves_energy() {
        let rig = RigPreset::Desk.build(64, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let pixels = (0..64 * 32)
                .map(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
                .collect();
            let map = RadianceMap::new(64, 32, pixels).unwrap();
            let total = rig.project(&map).unwrap().total();
            let direct = map.total_energy();
            for c in 0..3 {
                assert!((total[c] - direct[c]).abs() <= 1e-12 * direct[c]);
            }
        }
        let wrong = RadianceMap::uniform(32, 32, [1.0; 3]).unwrap();
        assert!(rig.project(&wrong).is_err());
    }

    #[test]
    fn cellwise_constant_env_weights() {
        let rig = RigPreset::Desk.build(32, 16).unwrap();
        let radiance: Vec<[f64; 3]> = (0..16).map(|i| [i as f64 * 0.25, 1.0, 0.0]).collect();
        let env = rig.cellwise_constant_env(&radiance).unwrap();
        let w = rig.project(&env).unwrap();
        for i in 0..16 {
            let expect = radiance[i][0] * rig.cell_solid_angle()[i];
            assert!((w.0[i][0] - expect).abs() <= 1e-12 * expect.max(1.0));
        }
        let ones = rig.cellwise_constant_env(&vec![[1.0; 3]; 16]).unwrap();
        assert!(ones.pixels().iter().all(|p| *p == [1.0; 3]));
    }

    #[test]
    fn cell_permuting_yaw_permutes_weights_on_a_cylindrical_rig() {
        let (rows, per_row) = (2, 4);
        // 3 pixels per light in both directions keeps centers off cell boundaries
        let (w, h) = (per_row * 3, rows * 3);
        let rig = LightRig::build(
            rows * per_row,
            Layout::Cylindrical { rows, lights_per_row: per_row },
            Coverage::Full,
            w,
            h,
        )
        .unwrap();
        let radiance: Vec<[f64; 3]> = (0..8).map(|i| [1.0 + i as f64, 0.5, 2.0]).collect();
        let env = rig.cellwise_constant_env(&radiance).unwrap();
        let rotated = crate::hdr::rotate_env(&env, 2.0 * PI / per_row as f64).unwrap();
        let before = rig.project(&env).unwrap();
        let after = rig.project(&rotated).unwrap();
        for r in 0..rows {
            for j in 0..per_row {
                let src = r * per_row + j;
                let dst = r * per_row + (j + 1) % per_row;
                assert_eq!(after.0[dst], before.0[src]);
            }
        }
    }

    #[test]
    fn manifest_round_trip_rebuilds_the_same_rig() {
        let rig = LightRig::build(
            12,
            Layout::Cylindrical { rows: 3, lights_per_row: 4 },
            Coverage::Full,
            24,
            12,
        )
        .unwrap();
        let json = serde_json::to_string(rig.manifest()).unwrap();
        let back = LightRig::from_manifest(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.id(), rig.id());
        assert_eq!(back.cell_of_pixel(), rig.cell_of_pixel());

        let mut tampered = rig.manifest().clone();
        tampered.directions[0][0] += 0.1;
        assert!(LightRig::from_manifest(&tampered).is_err());
    }
}
