use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::studio::AffineFlow;

/// Simulated camera motion over a still image. Content moves by `pan`
/// output pixels per frame (at unit zoom) and is magnified by `zoom` per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionTrack {
    pub pan: [f64; 2],
    pub zoom: f64,
}

impl MotionTrack {
    pub const STILL: MotionTrack = MotionTrack {
        pan: [0.0, 0.0],
        zoom: 1.0,
    };

    fn zoom_at(&self, frame: usize) -> f64 {
        self.zoom.powi(frame as i32)
    }

    /// Crop window center in source pixels.
    fn center_at(&self, frame: usize, src: (usize, usize)) -> [f64; 2] {
        [
            src.0 as f64 * 0.5 - frame as f64 * self.pan[0],
            src.1 as f64 * 0.5 - frame as f64 * self.pan[1],
        ]
    }

    /// Exact output-space motion from `frame` to `frame + 1`.
    pub fn flow(&self, frame: usize, out: (usize, usize)) -> AffineFlow {
        let z1 = self.zoom_at(frame + 1);
        let half = [out.0 as f64 * 0.5, out.1 as f64 * 0.5];
        AffineFlow {
            scale: self.zoom,
            offset: [
                half[0] - self.zoom * half[0] + z1 * self.pan[0],
                half[1] - self.zoom * half[1] + z1 * self.pan[1],
            ],
        }
    }

    /// Fails with the first frame whose crop window leaves the source.
    pub fn check_bounds(&self, frames: usize, src: (usize, usize), out: (usize, usize)) -> Result<()> {
        if !(self.zoom > 0.0 && self.zoom.is_finite()) || self.pan.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid motion track {self:?}")));
        }
        for f in 0..frames {
            let z = self.zoom_at(f);
            let c = self.center_at(f, src);
            let half = [out.0 as f64 * 0.5 / z, out.1 as f64 * 0.5 / z];
            let inside = (0..2).all(|k| {
                let lim = [src.0, src.1][k] as f64;
                c[k] - half[k] >= -1e-9 && c[k] + half[k] <= lim + 1e-9
            });
            if !inside {
                return Err(Error::InvalidArgument(format!(
                    "crop window leaves the {}x{} source at frame {f}",
                    src.0, src.1
                )));
            }
        }
        Ok(())
    }
}

fn bilinear(img: &Image, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (a, b, c, d) = (img.get(y0, x0), img.get(y0, x1), img.get(y1, x0), img.get(y1, x1));
    [0, 1, 2].map(|k| {
        let top = (1.0 - fx) * a[k] as f64 + fx * b[k] as f64;
        let bottom = (1.0 - fx) * c[k] as f64 + fx * d[k] as f64;
        ((1.0 - fy) * top + fy * bottom) as f32
    })
}

/// Renders `frames` crops of `sources` (one image reused, or one per frame)
/// along `track`, bilinearly resampled to `out` = (width, height). Also
/// returns the flow between consecutive output frames.
pub fn camera_motion_augment(
    sources: &[Image],
    track: &MotionTrack,
    frames: usize,
    out: (usize, usize),
) -> Result<(Vec<Image>, Vec<AffineFlow>)> {
    if frames == 0 || out.0 == 0 || out.1 == 0 {
        return Err(Error::InvalidArgument("empty augmentation request".into()));
    }
    if sources.len() != 1 && sources.len() != frames {
        return Err(Error::Shape(format!(
            "{} source images for {frames} frames",
            sources.len()
        )));
    }
    let src = sources[0].dims();
    if sources.iter().any(|s| s.dims() != src) {
        return Err(Error::Shape("source images differ in size".into()));
    }
    track.check_bounds(frames, src, out)?;
    let images = (0..frames)
        .map(|f| {
            let img = &sources[if sources.len() == 1 { 0 } else { f }];
            let z = track.zoom_at(f);
            let c = track.center_at(f, src);
            Image::from_fn(out.0, out.1, |row, col| {
                let x = c[0] + (col as f64 + 0.5 - out.0 as f64 * 0.5) / z;
                let y = c[1] + (row as f64 + 0.5 - out.1 as f64 * 0.5) / z;
                bilinear(img, x - 0.5, y - 0.5)
            })
        })
        .collect();
    let flows = (0..frames - 1).map(|f| track.flow(f, out)).collect();
    Ok((images, flows))
}
