//! Linear RGB images and environment maps.

use crate::error::{Error, Result};

/// Row-major linear RGB image with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("pixel {i} of {width}x{height} image")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<[f32; 3]> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: [f32; 3]) {
        self.pixels[row * self.width + col] = value;
    }

    /// Flat `[r, g, b, r, g, b, ...]` view in row-major order.
    pub fn to_flat(&self) -> Vec<f32> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn from_flat(width: usize, height: usize, data: &[f32]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} floats for a {width}x{height} RGB image",
                data.len()
            )));
        }
        let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(width, height, pixels)
    }

    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        for p in &mut out.pixels {
            for c in p.iter_mut() {
                *c *= factor;
            }
        }
        out
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f32 {
        self.pixels
            .iter()
            .flatten()
            .fold(0.0f32, |m, c| m.max(c.abs()))
    }
}

/// Equirectangular HDR environment map. All components are finite and
/// non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceMap(Image);

impl RadianceMap {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        Self::try_from(Image::new(width, height, pixels)?)
    }

    pub fn uniform(width: usize, height: usize, value: [f32; 3]) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.0.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        self.0.get(row, col)
    }

    /// Integral of radiance over the sphere, per channel: `Σ L(p)·ΔΩ(p)`.
    /// Each row is summed over its sorted values, so the result does not
    /// depend on pixel order within a row (integer yaw rolls keep it bit-exact).
    pub fn total_energy(&self) -> [f64; 3] {
        let (w, h) = self.dims();
        let mut acc = [0.0f64; 3];
        let mut row_vals = vec![0.0f32; w];
        for row in 0..h {
            let omega = crate::hdr::pixel_solid_angle(w, h, row);
            for (c, a) in acc.iter_mut().enumerate() {
                for (col, v) in row_vals.iter_mut().enumerate() {
                    *v = self.get(row, col)[c];
                }
                row_vals.sort_by(f32::total_cmp);
                let sum: f64 = row_vals.iter().map(|&v| v as f64).sum();
                *a += sum * omega;
            }
        }
        acc
    }
}

impl TryFrom<Image> for RadianceMap {
    type Error = Error;

    fn try_from(image: Image) -> Result<Self> {
        if let Some(i) = image
            .pixels
            .iter()
            .position(|p| p.iter().any(|c| *c < 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "negative radiance at pixel {i}"
            )));
        }
        Ok(Self(image))
    }
}

impl From<RadianceMap> for Image {
    fn from(map: RadianceMap) -> Self {
        map.0
    }
}

/// 8-bit sRGB-encoded preview image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdrImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}
