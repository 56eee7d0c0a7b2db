use serde::{Deserialize, Serialize};

use super::autograd::Mat;
use crate::error::{Error, Result};

/// Latent video stored `[frame][y][x][channel]`. Kept in f64 so the pixel
/// codec round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentClip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl LatentClip {
    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            data: vec![0.0; frames * height * width * channels],
        }
    }

    pub fn from_vec(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != frames * height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{height}x{width}x{channels} latent",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent clip".into()));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.frames, self.height, self.width, self.channels)
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    /// Frames `[start, start + len)` as a new clip.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames || len == 0 {
            return Err(Error::Shape(format!(
                "frames [{start}, {}) outside a {}-frame clip",
                start + len,
                self.frames
            )));
        }
        let n = self.frame_len();
        Ok(Self {
            frames: len,
            data: self.data[start * n..(start + len) * n].to_vec(),
            ..*self
        })
    }

    pub fn same_shape(&self, other: &LatentClip) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &LatentClip, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Rows are positions (frame-major), columns are channels.
    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.frames * self.height * self.width,
            cols: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(self.frames, self.height, self.width, self.channels, data)
    }
}

impl std::ops::Index<usize> for LatentClip {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}
