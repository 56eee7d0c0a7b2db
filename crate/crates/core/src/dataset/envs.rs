use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdr::pixel_to_dir;
use crate::image::RadianceMap;
use crate::math::Vec3;
use crate::util::rng_for;

fn random_dir(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), z, r * phi.sin())
}

/// Uniform base radiance plus one to three von Mises–Fisher-shaped blobs.
pub fn procedural_env(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<RadianceMap> {
    let base: [f64; 3] = {
        let level = rng.random_range(0.02..0.3);
        [0, 1, 2].map(|_| level * rng.random_range(0.7..1.3))
    };
    let blobs: Vec<(Vec3, f64, [f64; 3])> = (0..rng.random_range(1..=3))
        .map(|_| {
            let mu = random_dir(rng);
            let kappa = rng.random_range(5.0..80.0);
            let peak = rng.random_range(2.0..40.0);
            let tint = [0, 1, 2].map(|_| peak * rng.random_range(0.6..1.0));
            (mu, kappa, tint)
        })
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let d = pixel_to_dir(width, height, row, col)?;
            let mut px = base;
            for (mu, kappa, tint) in &blobs {
                let k = (kappa * (d.dot(*mu) - 1.0)).exp();
                for c in 0..3 {
                    px[c] += tint[c] * k;
                }
            }
            pixels.push(px.map(|v| v as f32));
        }
    }
    RadianceMap::new(width, height, pixels)
}

/// `count` maps, map `i` drawn from its own stream of `seed`.
pub fn procedural_envs(count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<RadianceMap>> {
    (0..count)
        .map(|i| procedural_env(width, height, &mut rng_for(seed, i as u64)))
        .collect()
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.78;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle; the first `round(n·fraction)` ids train, the rest test.
pub fn split_ids(ids: &[String], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng_for(seed, 0x5_9117));
    let n_train = (ids.len() as f64 * train_fraction).round() as usize;
    let pick = |idx: &[usize]| -> Vec<String> {
        let mut v: Vec<usize> = idx.to_vec();
        v.sort_unstable();
        v.into_iter().map(|i| ids[i].clone()).collect()
    };
    Ok(Split {
        seed,
        train_fraction,
        train: pick(&order[..n_train]),
        test: pick(&order[n_train..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envs_are_positive_and_reproducible() {
        let a = procedural_envs(3, 16, 8, 4).unwrap();
        let b = procedural_envs(3, 16, 8, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        for m in &a {
            assert!(m.pixels().iter().flatten().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn split_mirrors_the_fraction_and_partitions() {
        let ids: Vec<String> = (0..769).map(|i| format!("env{i}")).collect();
        let s = split_ids(&ids, DEFAULT_TRAIN_FRACTION, 1).unwrap();
        assert_eq!(s.train.len(), 600);
        assert_eq!(s.test.len(), 169);
        let mut all: Vec<String> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(split_ids(&ids, 0.78, 1).unwrap(), s);
        assert_ne!(split_ids(&ids, 0.78, 2).unwrap().train, s.train);
    }
}
