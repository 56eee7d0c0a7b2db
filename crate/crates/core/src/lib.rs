//! Desk-scale video relighting toolkit.

pub mod cli;
pub mod conditioning;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod hdr;
pub mod image;
pub mod math;
pub mod pipeline;
pub mod rig;
pub mod sequencer;
pub mod studio;
pub mod util;

pub use error::{Error, Result};
pub use image::{Image, LdrImage, RadianceMap};
pub use math::Vec3;
