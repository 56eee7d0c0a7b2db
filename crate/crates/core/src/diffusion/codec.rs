use super::latent::LatentClip;
use crate::error::{Error, Result};
use crate::image::Image;

pub const LATENT_MEAN: f64 = 0.5;
pub const LATENT_SCALE: f64 = 0.5;

/// Space-to-channel rearrangement `(h, w, 3) → (h/p, w/p, 3p²)` followed by
/// `(x − 0.5) / 0.5`. Channel index is `(dy·p + dx)·3 + c`.
pub fn patchify(frames: &[Image], p: usize) -> Result<LatentClip> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames to encode".into()))?;
    let (w, h) = first.dims();
    if p == 0 || w % p != 0 || h % p != 0 {
        return Err(Error::Shape(format!("{w}x{h} frames are not divisible by patch {p}")));
    }
    if frames.iter().any(|f| f.dims() != (w, h)) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    let (lh, lw, ch) = (h / p, w / p, 3 * p * p);
    let mut data = Vec::with_capacity(frames.len() * h * w * 3);
    for frame in frames {
        for y in 0..lh {
            for x in 0..lw {
                for dy in 0..p {
                    for dx in 0..p {
                        let px = frame.get(y * p + dy, x * p + dx);
                        data.extend(px.iter().map(|&v| (v as f64 - LATENT_MEAN) / LATENT_SCALE));
                    }
                }
            }
        }
    }
    LatentClip::from_vec(frames.len(), lh, lw, ch, data)
}

pub fn unpatchify(latent: &LatentClip, p: usize) -> Result<Vec<Image>> {
    if p == 0 || latent.channels != 3 * p * p {
        return Err(Error::Shape(format!(
            "{} latent channels do not match patch {p}",
            latent.channels
        )));
    }
    let (lh, lw) = (latent.height, latent.width);
    (0..latent.frames)
        .map(|f| {
            let src = latent.frame(f);
            let mut img = Image::zeros(lw * p, lh * p);
            for y in 0..lh {
                for x in 0..lw {
                    let base = (y * lw + x) * latent.channels;
                    for dy in 0..p {
                        for dx in 0..p {
                            let o = base + (dy * p + dx) * 3;
                            let px = [0, 1, 2].map(|c| (src[o + c] * LATENT_SCALE + LATENT_MEAN) as f32);
                            img.set(y * p + dy, x * p + dx, px);
                        }
                    }
                }
            }
            Ok(img)
        })
        .collect()
}
