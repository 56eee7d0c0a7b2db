//! HDR image codecs and equirectangular geometry.
//!
//! Direction convention: `v = (row + 0.5) / H`, `u = (col + 0.5) / W`,
//! polar angle `θ = π·v` measured from +Y (up), azimuth `φ = 2π·(u − 0.5)`,
//! and `d = (sin θ · sin φ, cos θ, −sin θ · cos φ)`. The map center looks
//! down −Z.

mod pfm;
mod preview;
mod rgbe;

pub use pfm::{decode_pfm, encode_pfm};
pub use preview::{encode_png, tonemap_preview};
pub use rgbe::{decode_rgbe, encode_rgbe};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::RadianceMap;
use crate::math::Vec3;

/// Unit direction through the center of pixel `(row, col)`.
pub fn pixel_to_dir(width: usize, height: usize, row: usize, col: usize) -> Result<Vec3> {
    if row >= height || col >= width {
        return Err(Error::InvalidArgument(format!(
            "pixel ({row}, {col}) outside {width}x{height} map"
        )));
    }
    Ok(uv_to_dir(
        (col as f64 + 0.5) / width as f64,
        (row as f64 + 0.5) / height as f64,
    ))
}

pub(crate) fn uv_to_dir(u: f64, v: f64) -> Vec3 {
    let theta = PI * v;
    let phi = 2.0 * PI * (u - 0.5);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * sp, ct, -st * cp)
}

/// Pixel containing direction `d` (need not be normalized, must be nonzero).
pub fn dir_to_pixel(width: usize, height: usize, d: Vec3) -> Result<(usize, usize)> {
    let len = d.length();
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate direction {d:?}")));
    }
    let d = d / len;
    let theta = d.y.clamp(-1.0, 1.0).acos();
    let phi = d.x.atan2(-d.z);
    let v = theta / PI;
    let u = phi / (2.0 * PI) + 0.5;
    let row = ((v * height as f64).floor() as isize).clamp(0, height as isize - 1) as usize;
    let col = ((u * width as f64).floor() as isize).rem_euclid(width as isize) as usize;
    Ok((row, col))
}

/// Solid angle (steradians) of any pixel in `row`:
/// `(2π/W)·(cos(π·row/H) − cos(π·(row+1)/H))`.
pub fn pixel_solid_angle(width: usize, height: usize, row: usize) -> f64 {
    let h = height as f64;
    let top = (PI * row as f64 / h).cos();
    let bottom = (PI * (row as f64 + 1.0) / h).cos();
    2.0 * PI / width as f64 * (top - bottom)
}

/// Rotates the environment about +Y. Positive yaw moves content toward
/// increasing azimuth (increasing column). Yaws that are a multiple of
/// `2π/W` are exact integer rolls; others resample with wrap-around linear
/// interpolation along each row.
pub fn rotate_env(map: &RadianceMap, yaw: f64) -> Result<RadianceMap> {
    if !yaw.is_finite() {
        return Err(Error::NonFinite(format!("yaw {yaw}")));
    }
    let (w, h) = map.dims();
    let turns = (yaw / (2.0 * PI)).rem_euclid(1.0);
    let shift = turns * w as f64;
    let nearest = shift.round();
    let integral = (shift - nearest).abs() < 1e-9;

    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            if integral {
                let src = (col as isize - nearest as isize).rem_euclid(w as isize) as usize;
                pixels.push(map.get(row, src));
            } else {
                // out[col] = in[col - shift]
                let x = col as f64 - shift;
                let x0 = x.floor();
                let frac = x - x0;
                let a = (x0 as isize).rem_euclid(w as isize) as usize;
                let b = (a + 1) % w;
                let pa = map.get(row, a);
                let pb = map.get(row, b);
                let mut out = [0.0f32; 3];
                for c in 0..3 {
                    out[c] = ((1.0 - frac) * pa[c] as f64 + frac * pb[c] as f64) as f32;
                }
                pixels.push(out);
            }
        }
    }
    RadianceMap::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_pixel_looks_down_negative_z() {
        for (w, h) in [(1, 1), (3, 1), (5, 3), (33, 17)] {
            let d = pixel_to_dir(w, h, h / 2, w / 2).unwrap();
            assert!((d.x).abs() < 1e-12 && d.y.abs() < 1e-12, "{w}x{h}: {d:?}");
            assert!((d.z + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn top_row_points_up() {
        for h in [64, 128, 256] {
            let w = 2 * h;
            let d = pixel_to_dir(w, h, 0, w / 2).unwrap();
            assert!(d.y > 0.99);
        }
    }

    #[test]
    fn dir_pixel_round_trip_is_identity_on_centers() {
        let (w, h) = (16, 8);
        for row in 0..h {
            for col in 0..w {
                let d = pixel_to_dir(w, h, row, col).unwrap();
                assert!((d.length() - 1.0).abs() < 1e-6);
                assert_eq!(dir_to_pixel(w, h, d).unwrap(), (row, col));
            }
        }
    }

    #[test]
    fn out_of_range_pixel_is_rejected() {
        assert!(pixel_to_dir(4, 2, 2, 0).is_err());
        assert!(pixel_to_dir(4, 2, 0, 4).is_err());
        assert!(dir_to_pixel(4, 2, Vec3::ZERO).is_err());
    }

    #[test]
    fn solid_angles_telescope_to_four_pi() {
        assert!((pixel_solid_angle(1, 1, 0) - 4.0 * PI).abs() < 1e-12);
        for w in [1usize, 3, 8] {
            assert!((pixel_solid_angle(w, 2, 0) - 2.0 * PI / w as f64).abs() < 1e-12);
        }
        for (w, h) in [(2, 1), (16, 8), (256, 128), (7, 13)] {
            let total: f64 = (0..h).map(|r| pixel_solid_angle(w, h, r) * w as f64).sum();
            assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 1e-12);
        }
    }

    fn ramp_map(w: usize, h: usize) -> RadianceMap {
        let pixels = (0..w * h)
            .map(|i| [i as f32, (i * 7 % 5) as f32, 0.5 * i as f32])
            .collect();
        RadianceMap::new(w, h, pixels).unwrap()
    }

    #[test]
    fn rotation_by_zero_or_full_turn_is_identity() {
        let map = ramp_map(8, 4);
        assert_eq!(rotate_env(&map, 0.0).unwrap(), map);
        assert_eq!(rotate_env(&map, 2.0 * PI).unwrap(), map);
        assert_eq!(rotate_env(&map, -4.0 * PI).unwrap(), map);
    }

    #[test]
    fn integer_yaw_permutes_pixels_within_rows() {
        let (w, h) = (8, 4);
        let map = ramp_map(w, h);
        for k in 0..w {
            let rotated = rotate_env(&map, 2.0 * PI * k as f64 / w as f64).unwrap();
            for row in 0..h {
                for col in 0..w {
                    assert_eq!(rotated.get(row, (col + k) % w), map.get(row, col));
                }
            }
            let e0 = map.total_energy();
            let e1 = rotated.total_energy();
            assert_eq!(e0, e1);
        }
    }

    #[test]
    fn fractional_yaw_interpolates_between_neighbours() {
        let (w, h) = (4, 1);
        let map = RadianceMap::new(w, h, vec![[0.0; 3], [4.0; 3], [8.0; 3], [12.0; 3]]).unwrap();
        let rotated = rotate_env(&map, 2.0 * PI * 0.5 / w as f64).unwrap();
        // out[c] = in[c - 0.5]
        assert_eq!(rotated.get(0, 1)[0], 2.0);
        assert_eq!(rotated.get(0, 0)[0], 6.0);
    }
}
