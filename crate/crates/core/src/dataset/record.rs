use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, RadianceMap};
use crate::studio::AffineFlow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipSource {
    /// OLAT-composited under a known HDR map, with synthetic camera motion.
    LightingRich,
    /// Real object motion, unknown lighting, frame-wise pseudo-albedo.
    MotionRich,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub id: String,
    pub source: ClipSource,
    /// Records in one group share the motion track and therefore the albedo video.
    pub group: String,
    pub lit: Vec<Image>,
    pub albedo: Vec<Image>,
    pub env: Option<RadianceMap>,
    /// Frames of `lit` usable as appearance references.
    pub ref_pool: Vec<usize>,
    /// `flows[i]` maps frame `i` to frame `i + 1`.
    pub flows: Option<Vec<AffineFlow>>,
    /// Foreground (object hit) masks per frame.
    pub masks: Option<Vec<Vec<bool>>>,
}

impl ClipRecord {
    pub fn frames(&self) -> usize {
        self.lit.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.lit.first().map_or((0, 0), Image::dims)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("record {}: {msg}", self.id)));
        if self.lit.is_empty() || self.lit.len() != self.albedo.len() {
            return bad(format!("{} lit vs {} albedo frames", self.lit.len(), self.albedo.len()));
        }
        let dims = self.dims();
        if self.lit.iter().chain(&self.albedo).any(|f| f.dims() != dims) {
            return bad("frames differ in size".into());
        }
        if self.env.is_some() != (self.source == ClipSource::LightingRich) {
            return bad("an HDR map is present exactly for lighting-rich clips".into());
        }
        if self.ref_pool.iter().any(|&i| i >= self.frames()) {
            return bad("reference index out of range".into());
        }
        if let Some(flows) = &self.flows {
            if flows.len() + 1 != self.frames() {
                return bad(format!("{} flows for {} frames", flows.len(), self.frames()));
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.frames() || masks.iter().any(|m| m.len() != dims.0 * dims.1) {
                return bad("mask shape mismatch".into());
            }
        }
        Ok(())
    }
}
