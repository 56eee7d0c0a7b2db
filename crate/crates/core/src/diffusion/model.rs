use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autograd::{Mat, ParamStore, Tape};
use super::denoiser::{Denoiser, DenoiserConfig, DenoiserInput};
use super::latent::LatentClip;
use super::layers::Builder;
use crate::conditioning::{CondBundle, CondMode, ConditionInput, Embedder, EmbedderConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Pixel patch size of the latent codec.
    pub patch: usize,
    pub denoiser: DenoiserConfig,
    pub embedder: EmbedderConfig,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            patch: 4,
            denoiser: DenoiserConfig::desk(),
            embedder: EmbedderConfig::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        self.embedder.validate()?;
        if self.embedder.dim != self.denoiser.context_dim {
            return Err(Error::Config(format!(
                "embedding width {} differs from the denoiser context width {}",
                self.embedder.dim, self.denoiser.context_dim
            )));
        }
        Ok(())
    }
}

/// Predicts the v-target; implemented by the trained model and by test oracles.
pub trait VelocityModel: Sync {
    fn predict_v(
        &self,
        x_t: &LatentClip,
        cond: &LatentClip,
        mask: &[f64],
        t: f64,
        context: &Mat,
    ) -> Result<LatentClip>;
}

/// Denoiser plus condition encoders sharing one parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    denoiser: Denoiser,
    embedder: Embedder,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::Init {
            store: &mut params,
            rng: &mut rng,
        };
        let denoiser = Denoiser::build(config.denoiser, &mut b)?;
        let embedder = Embedder::build(config.embedder, &mut b)?;
        Ok(Self {
            config,
            params,
            denoiser,
            embedder,
        })
    }

    /// Rebinds a loaded parameter store; fails on any name or shape mismatch.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let mut b = Builder::Load {
            store: &params,
            used: 0,
        };
        let denoiser = Denoiser::build(config.denoiser, &mut b)?;
        let embedder = Embedder::build(config.embedder, &mut b)?;
        b.finish()?;
        if let Some(id) = (0..params.len()).find(|&i| !params.get(i).is_finite()) {
            return Err(Error::NonFinite(format!("parameter {}", params.name(id))));
        }
        Ok(Self {
            config,
            params,
            denoiser,
            embedder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn condition(&self, input: &ConditionInput, mode: CondMode) -> Result<CondBundle> {
        self.embedder.condition(&self.params, input, mode)
    }
}

impl VelocityModel for Model {
    fn predict_v(
        &self,
        x_t: &LatentClip,
        cond: &LatentClip,
        mask: &[f64],
        t: f64,
        context: &Mat,
    ) -> Result<LatentClip> {
        let mut tape = Tape::new(&self.params);
        let ctx = tape.leaf(context.clone());
        let input = DenoiserInput { x_t, cond, mask, t };
        let out = self.denoiser.forward(&mut tape, &input, ctx)?;
        x_t.with_data(tape.value(out).data.clone())
    }
}
