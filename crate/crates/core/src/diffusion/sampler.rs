use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autograd::Mat;
use super::latent::LatentClip;
use super::model::VelocityModel;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

pub fn gaussian_like(shape: &LatentClip, rng: &mut ChaCha8Rng) -> LatentClip {
    let data = (0..shape.data.len()).map(|_| StandardNormal.sample(rng)).collect();
    LatentClip {
        data,
        ..shape.clone_shape()
    }
}

impl LatentClip {
    fn clone_shape(&self) -> LatentClip {
        LatentClip {
            data: Vec::new(),
            ..*self
        }
    }
}

/// Deterministic DDIM on the grid `t_i = 1 − i/steps`, starting from seeded
/// Gaussian noise. Returns the last `x̂0` estimate.
pub fn ddim_sample(
    model: &dyn VelocityModel,
    cond: &LatentClip,
    mask: &[f64],
    context: &Mat,
    steps: usize,
    seed: u64,
) -> Result<LatentClip> {
    if steps < 1 {
        return Err(Error::InvalidArgument("DDIM needs at least one step".into()));
    }
    let sched = NoiseSchedule;
    let mut x = gaussian_like(cond, &mut ChaCha8Rng::seed_from_u64(seed));
    for i in 0..steps {
        let t = 1.0 - i as f64 / steps as f64;
        let (a, s) = sched.alpha_sigma(t);
        let v = model.predict_v(&x, cond, mask, t, context)?;
        x.check_same_shape(&v, "model output")?;
        let x0: Vec<f64> = x.data.iter().zip(&v.data).map(|(xt, vh)| a * xt - s * vh).collect();
        if i + 1 == steps {
            return x.with_data(x0);
        }
        let eps = x.data.iter().zip(&v.data).map(|(xt, vh)| s * xt + a * vh);
        let (a2, s2) = sched.alpha_sigma(1.0 - (i + 1) as f64 / steps as f64);
        let next = x0.iter().zip(eps).map(|(x0, e)| a2 * x0 + s2 * e).collect();
        x = x.with_data(next)?;
    }
    unreachable!("loop returns on its last step")
}

/// Exact velocity for a fixed clean target: `v = α·ε − σ·x0` with
/// `ε = (x_t − α·x0)/σ`, so DDIM recovers the target.
pub(crate) fn oracle_velocity(x_t: &LatentClip, x0: &[f64], t: f64) -> Result<LatentClip> {
    let (a, s) = NoiseSchedule.alpha_sigma(t);
    if s == 0.0 {
        return Err(Error::InvalidArgument("oracle velocity undefined at t = 0".into()));
    }
    x_t.with_data(
        x_t.data
            .iter()
            .zip(x0)
            .map(|(xt, x0)| a * (xt - a * x0) / s - s * x0)
            .collect(),
    )
}

/// Always steers toward one fixed clean clip.
#[derive(Debug, Clone)]
pub struct TargetOracle(pub LatentClip);

impl VelocityModel for TargetOracle {
    fn predict_v(&self, x_t: &LatentClip, _: &LatentClip, _: &[f64], t: f64, _: &Mat) -> Result<LatentClip> {
        x_t.check_same_shape(&self.0, "oracle target")?;
        oracle_velocity(x_t, &self.0.data, t)
    }
}

/// Steers toward its conditioning latents, so sampling reproduces the input
/// up to f64 rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyThroughOracle;

impl VelocityModel for CopyThroughOracle {
    fn predict_v(&self, x_t: &LatentClip, cond: &LatentClip, _: &[f64], t: f64, _: &Mat) -> Result<LatentClip> {
        x_t.check_same_shape(cond, "copy-through input")?;
        oracle_velocity(x_t, &cond.data, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(seed: u64) -> LatentClip {
        let shape = LatentClip::zeros(2, 2, 2, 3);
        gaussian_like(&shape, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn oracle_target_is_recovered_for_any_step_count() {
        let target = clip(1);
        let oracle = TargetOracle(target.clone());
        let cond = LatentClip::zeros(2, 2, 2, 3);
        for steps in [1, 2, 5, 30] {
            let out = ddim_sample(&oracle, &cond, &[0.0, 0.0], &Mat::zeros(1, 1), steps, 9).unwrap();
            for (a, b) in out.data.iter().zip(&target.data) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_step_matches_closed_form() {
        struct Constant(f64);
        impl VelocityModel for Constant {
            fn predict_v(&self, x: &LatentClip, _: &LatentClip, _: &[f64], _: f64, _: &Mat) -> Result<LatentClip> {
                x.with_data(vec![self.0; x.data.len()])
            }
        }
        let cond = LatentClip::zeros(1, 2, 2, 1);
        let out = ddim_sample(&Constant(0.25), &cond, &[0.0], &Mat::zeros(1, 1), 1, 3).unwrap();
        let noise = gaussian_like(&cond, &mut ChaCha8Rng::seed_from_u64(3));
        let (a, s) = NoiseSchedule.alpha_sigma(1.0);
        for (o, n) in out.data.iter().zip(&noise.data) {
            assert_eq!(*o, a * n - s * 0.25);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_seed_dependent() {
        struct Half;
        impl VelocityModel for Half {
            fn predict_v(&self, x: &LatentClip, _: &LatentClip, _: &[f64], _: f64, _: &Mat) -> Result<LatentClip> {
                x.with_data(x.data.iter().map(|v| 0.5 * v).collect())
            }
        }
        let cond = LatentClip::zeros(1, 2, 2, 2);
        let ctx = Mat::zeros(1, 1);
        let a = ddim_sample(&Half, &cond, &[0.0], &ctx, 4, 11).unwrap();
        let b = ddim_sample(&Half, &cond, &[0.0], &ctx, 4, 11).unwrap();
        let c = ddim_sample(&Half, &cond, &[0.0], &ctx, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(ddim_sample(&Half, &cond, &[0.0], &ctx, 0, 11).is_err());
    }

    #[test]
    fn copy_through_reproduces_input() {
        let input = clip(5);
        for steps in [1, 7, 30, 200] {
            let out = ddim_sample(&CopyThroughOracle, &input, &[0.0, 0.0], &Mat::zeros(1, 1), steps, 1).unwrap();
            for (a, b) in out.data.iter().zip(&input.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
