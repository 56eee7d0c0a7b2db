use crate::error::{Error, Result};
use crate::image::Image;
use crate::rig::LightWeights;
use crate::studio::OlatStack;

/// Image-based relighting: `Σ_i (w_i / Ω_i) ⊙ olat_i`, where each OLAT image
/// was rendered at intensity `Ω_i`. Accumulates in f64 in ascending light order.
pub fn compose_relight(stack: &OlatStack, weights: &LightWeights) -> Result<Image> {
    if weights.len() != stack.len() {
        return Err(Error::Shape(format!(
            "{} weights for a {}-light stack",
            weights.len(),
            stack.len()
        )));
    }
    let (w, h) = stack.dims();
    let mut acc = vec![[0.0f64; 3]; w * h];
    for ((img, wt), &omega) in stack.images.iter().zip(&weights.0).zip(&stack.cell_solid_angle) {
        let scale = wt.map(|v| v / omega);
        if scale == [0.0; 3] {
            continue;
        }
        for (a, p) in acc.iter_mut().zip(img.pixels()) {
            for c in 0..3 {
                a[c] += scale[c] * p[c] as f64;
            }
        }
    }
    Image::new(w, h, acc.iter().map(|p| p.map(|v| v as f32)).collect())
}
