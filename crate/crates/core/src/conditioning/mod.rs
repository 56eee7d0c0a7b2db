//! Lighting conditions for the denoiser: per-light tokens from an HDR map,
//! their embeddings, a reference-frame encoder, and null substitution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ClipSource;
use crate::diffusion::autograd::{Mat, ParamStore, RowMix, Tape, Var};
use crate::diffusion::layers::{Builder, Conv, Init, Linear};
use crate::error::{Error, Result};
use crate::image::{Image, RadianceMap};
use crate::math::Vec3;
use crate::rig::LightRig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightTokenSeq {
    /// Per-light RGB radiance·steradian sums.
    pub tokens: Vec<[f64; 3]>,
    pub mean_dirs: Vec<Vec3>,
}

impl LightTokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokens_from_env(rig: &LightRig, map: &RadianceMap) -> Result<LightTokenSeq> {
    Ok(LightTokenSeq {
        tokens: rig.project(map)?.0,
        mean_dirs: rig.cell_mean_dir().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CondMode {
    Hdr,
    Ref,
    Both,
    None,
}

impl CondMode {
    pub fn uses_hdr(self) -> bool {
        matches!(self, CondMode::Hdr | CondMode::Both)
    }

    pub fn uses_ref(self) -> bool {
        matches!(self, CondMode::Ref | CondMode::Both)
    }
}

/// Motion-rich clips carry no HDR map, so they always condition on a
/// reference frame; lighting-rich clips pick hdr, ref or both uniformly.
pub fn sample_condition_mode(source: ClipSource, rng: &mut impl Rng) -> CondMode {
    match source {
        ClipSource::MotionRich => CondMode::Ref,
        ClipSource::LightingRich => [CondMode::Hdr, CondMode::Ref, CondMode::Both][rng.random_range(0..3)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub n_lights: usize,
    pub hidden: usize,
    /// Embedding width `d`, shared by light and reference rows.
    pub dim: usize,
    pub pe_freqs: usize,
    pub ref_channels: [usize; 2],
    /// Reference grid side `g`; reference frames must be `8g × 8g`.
    pub ref_grid: usize,
    pub log1p: bool,
}

impl EmbedderConfig {
    pub fn desk() -> Self {
        Self {
            n_lights: 16,
            hidden: 32,
            dim: 64,
            pe_freqs: 4,
            ref_channels: [16, 32],
            ref_grid: 8,
            log1p: true,
        }
    }

    pub fn pe_dim(&self) -> usize {
        6 * self.pe_freqs
    }

    pub fn context_rows(&self) -> usize {
        self.n_lights + self.ref_grid * self.ref_grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lights == 0 || self.hidden == 0 || self.ref_grid == 0 || self.dim <= self.pe_dim() {
            return Err(Error::Config(format!(
                "invalid embedder config {self:?} (dim must exceed 6·pe_freqs)"
            )));
        }
        Ok(())
    }
}

/// `[sin(2^j·c), cos(2^j·c)]` for each coordinate `c` and `j < freqs`.
pub fn positional_encoding(dir: Vec3, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * freqs);
    for c in dir.to_array() {
        for j in 0..freqs {
            let (s, co) = (c * (1u64 << j) as f64).sin_cos();
            out.push(s);
            out.push(co);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondBundle {
    pub mode: CondMode,
    pub light_embedding: Option<Mat>,
    pub ref_embedding: Option<Mat>,
    /// `N + g²` rows of width `d`.
    pub context: Mat,
}

/// Raw condition data for one clip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionInput {
    pub tokens: Option<LightTokenSeq>,
    pub reference: Option<Image>,
}

#[derive(Debug, Clone)]
pub struct Embedder {
    cfg: EmbedderConfig,
    mlp1: Linear,
    mlp2: Linear,
    ref1: Conv,
    ref2: Conv,
    ref3: Conv,
    null_hdr: usize,
    null_ref: usize,
}

impl Embedder {
    pub(crate) fn build(cfg: EmbedderConfig, b: &mut Builder) -> Result<Self> {
        cfg.validate()?;
        let [c1, c2] = cfg.ref_channels;
        Ok(Self {
            cfg,
            mlp1: Linear::new(b, "cond.mlp1", 3, cfg.hidden, true, Init::Fan(1.0), false)?,
            mlp2: Linear::new(b, "cond.mlp2", cfg.hidden, cfg.dim - cfg.pe_dim(), true, Init::Fan(1.0), false)?,
            ref1: Conv::new(b, "cond.ref1", 3, c1, 2, 2, Init::Fan(1.0), false)?,
            ref2: Conv::new(b, "cond.ref2", c1, c2, 2, 2, Init::Fan(1.0), false)?,
            ref3: Conv::new(b, "cond.ref3", c2, cfg.dim, 2, 2, Init::Fan(1.0), false)?,
            null_hdr: b.tensor("cond.null_hdr", 1, cfg.dim, Init::Zeros, false)?,
            null_ref: b.tensor("cond.null_ref", 1, cfg.dim, Init::Zeros, false)?,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    /// Row `i` is `MLP(log1p(token_i)) ⧺ PE(mean_dir_i)`.
    pub fn embed_tokens_on(&self, tape: &mut Tape, tokens: &LightTokenSeq) -> Result<Var> {
        let n = tokens.len();
        if n != self.cfg.n_lights || tokens.mean_dirs.len() != n {
            return Err(Error::Shape(format!(
                "{n} tokens / {} directions for a {}-light embedder",
                tokens.mean_dirs.len(),
                self.cfg.n_lights
            )));
        }
        let mut feats = Vec::with_capacity(3 * n);
        for t in &tokens.tokens {
            for &v in t {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("light token {t:?}")));
                }
                feats.push(if self.cfg.log1p { v.ln_1p() } else { v });
            }
        }
        let pe_dim = self.cfg.pe_dim();
        let pe: Vec<f64> = tokens
            .mean_dirs
            .iter()
            .flat_map(|&d| positional_encoding(d, self.cfg.pe_freqs))
            .collect();
        let x = tape.leaf(Mat::from_vec(n, 3, feats)?);
        let h = self.mlp1.apply(tape, x)?;
        let h = tape.silu(h);
        let m = self.mlp2.apply(tape, h)?;
        if pe_dim == 0 {
            return Ok(m);
        }
        let pe = tape.leaf(Mat::from_vec(n, pe_dim, pe)?);
        tape.concat_cols(&[m, pe])
    }

    /// Three 2×2 stride-2 convolutions on raw linear RGB to a
    /// `(H/8)·(W/8) × d` grid, row-major.
    pub fn encode_reference_on(&self, tape: &mut Tape, frame: &Image) -> Result<Var> {
        let (w, h) = frame.dims();
        if w % 8 != 0 || h % 8 != 0 {
            return Err(Error::Shape(format!(
                "reference frame {w}x{h} is not divisible by the encoder stride 8"
            )));
        }
        let data = frame.pixels().iter().flat_map(|p| p.map(f64::from)).collect();
        let x = tape.leaf(Mat::from_vec(w * h, 3, data)?);
        let (a, h1, w1) = self.ref1.apply(tape, x, 1, h, w)?;
        let a = tape.silu(a);
        let (a, h2, w2) = self.ref2.apply(tape, a, 1, h1, w1)?;
        let a = tape.silu(a);
        let (a, _, _) = self.ref3.apply(tape, a, 1, h2, w2)?;
        Ok(a)
    }

    /// Light rows (or the hdr null) followed by reference rows (or the ref
    /// null). Embeddings the mode does not use are ignored.
    pub fn assemble_on(
        &self,
        tape: &mut Tape,
        light: Option<Var>,
        reference: Option<Var>,
        mode: CondMode,
    ) -> Result<Var> {
        let g2 = self.cfg.ref_grid * self.cfg.ref_grid;
        let light = if mode.uses_hdr() {
            let l = light.ok_or_else(|| {
                Error::InvalidArgument(format!("mode {mode:?} needs a light embedding"))
            })?;
            if tape.value(l).shape() != (self.cfg.n_lights, self.cfg.dim) {
                return Err(Error::Shape(format!(
                    "light embedding {:?}",
                    tape.value(l).shape()
                )));
            }
            l
        } else {
            let null = tape.param(self.null_hdr);
            tape.mix(null, RowMix::broadcast(self.cfg.n_lights).into())?
        };
        let reference = if mode.uses_ref() {
            let r = reference.ok_or_else(|| {
                Error::InvalidArgument(format!("mode {mode:?} needs a reference embedding"))
            })?;
            if tape.value(r).shape() != (g2, self.cfg.dim) {
                return Err(Error::Shape(format!(
                    "reference embedding {:?}, expected ({g2}, {})",
                    tape.value(r).shape(),
                    self.cfg.dim
                )));
            }
            r
        } else {
            let null = tape.param(self.null_ref);
            tape.mix(null, RowMix::broadcast(g2).into())?
        };
        tape.concat_rows(&[light, reference])
    }

    /// Builds the context on `tape` from raw inputs, computing only the
    /// embeddings the mode uses.
    pub fn context_on(&self, tape: &mut Tape, input: &ConditionInput, mode: CondMode) -> Result<Var> {
        let light = match (&input.tokens, mode.uses_hdr()) {
            (Some(t), true) => Some(self.embed_tokens_on(tape, t)?),
            _ => None,
        };
        let reference = match (&input.reference, mode.uses_ref()) {
            (Some(r), true) => Some(self.encode_reference_on(tape, r)?),
            _ => None,
        };
        self.assemble_on(tape, light, reference, mode)
    }

    pub fn embed_tokens(&self, params: &ParamStore, tokens: &LightTokenSeq) -> Result<Mat> {
        let mut tape = Tape::new(params);
        let v = self.embed_tokens_on(&mut tape, tokens)?;
        Ok(tape.value(v).clone())
    }

    pub fn encode_reference(&self, params: &ParamStore, frame: &Image) -> Result<Mat> {
        let mut tape = Tape::new(params);
        let v = self.encode_reference_on(&mut tape, frame)?;
        Ok(tape.value(v).clone())
    }

    pub fn assemble_condition(
        &self,
        params: &ParamStore,
        light: Option<&Mat>,
        reference: Option<&Mat>,
        mode: CondMode,
    ) -> Result<CondBundle> {
        let mut tape = Tape::new(params);
        let l = light.map(|m| tape.leaf(m.clone()));
        let r = reference.map(|m| tape.leaf(m.clone()));
        let ctx = self.assemble_on(&mut tape, l, r, mode)?;
        Ok(CondBundle {
            mode,
            light_embedding: light.filter(|_| mode.uses_hdr()).cloned(),
            ref_embedding: reference.filter(|_| mode.uses_ref()).cloned(),
            context: tape.value(ctx).clone(),
        })
    }

    pub fn condition(&self, params: &ParamStore, input: &ConditionInput, mode: CondMode) -> Result<CondBundle> {
        let light = match (&input.tokens, mode.uses_hdr()) {
            (Some(t), true) => Some(self.embed_tokens(params, t)?),
            _ => None,
        };
        let reference = match (&input.reference, mode.uses_ref()) {
            (Some(r), true) => Some(self.encode_reference(params, r)?),
            _ => None,
        };
        self.assemble_condition(params, light.as_ref(), reference.as_ref(), mode)
    }
}

#[cfg(test)]
mod tests;
