//! Image and video quality measures on linear RGB frames.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::studio::AffineFlow;

pub const PSNR_CAP_DB: f64 = 99.0;

const REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn check_mask(a: &Image, mask: Option<&[bool]>) -> Result<()> {
    match mask {
        Some(m) if m.len() != a.pixels().len() => Err(Error::Shape(format!(
            "mask has {} entries for {} pixels",
            m.len(),
            a.pixels().len()
        ))),
        Some(m) if !m.iter().any(|&x| x) => Err(Error::InvalidArgument("empty metric mask".into())),
        _ => Ok(()),
    }
}

/// `10·log10(1/MSE)` with peak 1, clamped to `[0, 99]` dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    psnr_masked(a, b, None)
}

pub fn psnr_masked(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(a, b)?;
    check_mask(a, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (pa, pb)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sum += d * d;
        }
        n += 3;
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).clamp(0.0, PSNR_CAP_DB))
}

fn gaussian_kernel() -> [f64; 11] {
    let mut k = [0.0; 11];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * 1.5 * 1.5)).exp();
    }
    k
}

/// SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03 and
/// peak 1, per channel then averaged. Near borders the window is cut to the
/// image and renormalized, so every pixel contributes.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_masked(a, b, None)
}

pub fn ssim_masked(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(a, b)?;
    check_mask(a, mask)?;
    let (w, h) = a.dims();
    let k = gaussian_kernel();
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.is_some_and(|m| !m[y * w + x]) {
                continue;
            }
            for c in 0..3 {
                let (mut sw, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..11 {
                    let yy = y as isize + dy as isize - 5;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for dx in 0..11 {
                        let xx = x as isize + dx as isize - 5;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let wt = k[dy] * k[dx];
                        let va = a.get(yy as usize, xx as usize)[c] as f64;
                        let vb = b.get(yy as usize, xx as usize)[c] as f64;
                        sw += wt;
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (ma, mb) = (ma / sw, mb / sw);
                let va = (saa / sw - ma * ma).max(0.0);
                let vb = (sbb / sw - mb * mb).max(0.0);
                let cov = sab / sw - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn bilinear(img: &Image, x: f64, y: f64) -> Option<[f64; 3]> {
    // Pixel centers sit at half-integers.
    let (w, h) = img.dims();
    let (fx, fy) = (x - 0.5, y - 0.5);
    let eps = 1e-9;
    if fx < -eps || fy < -eps || fx > (w - 1) as f64 + eps || fy > (h - 1) as f64 + eps {
        return None;
    }
    let fx = fx.clamp(0.0, (w - 1) as f64);
    let fy = fy.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let p = |r: usize, q: usize| img.get(r, q)[c] as f64;
        let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
        let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
        *o = top * (1.0 - ty) + bottom * ty;
    }
    Some(out)
}

/// Mean over consecutive pairs of the mean `|f[t+1] − warp(f[t])|`, using
/// the exact flow from frame `t` to `t+1`. Pixels whose source lies outside
/// frame `t` are skipped.
pub fn temporal_warp_error(frames: &[Image], flows: &[AffineFlow]) -> Result<f64> {
    if flows.len() + 1 != frames.len() {
        return Err(Error::Shape(format!("{} flows for {} frames", flows.len(), frames.len())));
    }
    let mut pair_errors = Vec::with_capacity(flows.len());
    for (t, flow) in flows.iter().enumerate() {
        let (prev, next) = (&frames[t], &frames[t + 1]);
        check_dims(prev, next)?;
        let (w, h) = next.dims();
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                let src = flow.invert([x as f64 + 0.5, y as f64 + 0.5]);
                let Some(v) = bilinear(prev, src[0], src[1]) else { continue };
                let q = next.get(y, x);
                for c in 0..3 {
                    sum += (q[c] as f64 - v[c]).abs();
                }
                n += 3;
            }
        }
        if n > 0 {
            pair_errors.push(sum / n as f64);
        }
    }
    if pair_errors.is_empty() {
        return Ok(0.0);
    }
    Ok(pair_errors.iter().sum::<f64>() / pair_errors.len() as f64)
}

pub fn mean_luminance(frame: &Image) -> f64 {
    let sum: f64 = frame
        .pixels()
        .iter()
        .map(|p| (0..3).map(|c| REC709[c] * p[c] as f64).sum::<f64>())
        .sum();
    sum / frame.pixels().len() as f64
}

/// Mean over consecutive pairs of the absolute change in mean Rec.709 luminance.
pub fn flicker_index(frames: &[Image]) -> Result<f64> {
    if frames.len() < 2 {
        return Ok(0.0);
    }
    let lum: Vec<f64> = frames.iter().map(mean_luminance).collect();
    Ok(lum.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>() / (lum.len() - 1) as f64)
}
