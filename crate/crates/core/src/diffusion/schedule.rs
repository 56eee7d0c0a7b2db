use std::f64::consts::FRAC_PI_2;

use super::latent::LatentClip;
use crate::error::{Error, Result};

/// Cosine schedule on continuous `t ∈ [0, 1]`: `α = cos(πt/2)`, `σ = sin(πt/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NoiseSchedule;

impl NoiseSchedule {
    pub fn alpha(&self, t: f64) -> f64 {
        (FRAC_PI_2 * t).cos()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        (FRAC_PI_2 * t).sin()
    }

    pub fn alpha_sigma(&self, t: f64) -> (f64, f64) {
        let (s, c) = (FRAC_PI_2 * t).sin_cos();
        (c, s)
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// `x_t = α·x0 + σ·ε`.
pub fn add_noise(x0: &LatentClip, t: f64, eps: &LatentClip) -> Result<LatentClip> {
    check_t(t)?;
    x0.check_same_shape(eps, "add_noise")?;
    let (a, s) = NoiseSchedule.alpha_sigma(t);
    x0.with_data(x0.data.iter().zip(&eps.data).map(|(x, e)| a * x + s * e).collect())
}

/// `v = α·ε − σ·x0`.
pub fn v_target(x0: &LatentClip, eps: &LatentClip, t: f64) -> Result<LatentClip> {
    check_t(t)?;
    x0.check_same_shape(eps, "v_target")?;
    let (a, s) = NoiseSchedule.alpha_sigma(t);
    x0.with_data(x0.data.iter().zip(&eps.data).map(|(x, e)| a * e - s * x).collect())
}
