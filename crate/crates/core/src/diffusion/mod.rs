//! Conditional latent video diffusion at desk scale: patch codec, a small
//! denoiser with spatial, temporal and cross-attention blocks, v-prediction
//! training and deterministic DDIM sampling.

pub mod autograd;
pub mod codec;
pub mod denoiser;
pub(crate) mod layers;
pub mod latent;
pub mod model;
pub mod optim;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use codec::{patchify, unpatchify};
pub use denoiser::{Denoiser, DenoiserConfig, DenoiserInput};
pub use latent::LatentClip;
pub use model::{Model, ModelConfig, VelocityModel};
pub use optim::{AdamW, OptimState};
pub use sampler::{ddim_sample, gaussian_like, CopyThroughOracle, TargetOracle};
pub use schedule::{add_noise, v_target, NoiseSchedule};
pub use train::{prepare_clips, Stage, StageConfig, Task, TrainClip, TrainConfig, Trainer};
