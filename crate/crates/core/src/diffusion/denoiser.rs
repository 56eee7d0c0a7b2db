use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autograd::{Grads, Mat, ParamStore, RowMix, Tape, Var};
use super::latent::LatentClip;
use super::layers::{Builder, Conv, Init, Linear};
use crate::error::{Error, Result};

/// Two-resolution U-Net over latent frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub latent_channels: usize,
    pub width: usize,
    pub time_dim: usize,
    pub temporal_dim: usize,
    pub cross_dim: usize,
    pub context_dim: usize,
}

impl DenoiserConfig {
    /// 48-channel latents (patch 4), about 1.3·10⁵ parameters.
    pub fn desk() -> Self {
        Self {
            latent_channels: 48,
            width: 32,
            time_dim: 32,
            temporal_dim: 32,
            cross_dim: 32,
            context_dim: 64,
        }
    }

    /// Under 10³ parameters; used for gradient checks.
    pub fn miniature() -> Self {
        Self {
            latent_channels: 2,
            width: 3,
            time_dim: 4,
            temporal_dim: 3,
            cross_dim: 2,
            context_dim: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.latent_channels,
            self.width,
            self.temporal_dim,
            self.cross_dim,
            self.context_dim,
        ];
        if fields.contains(&0) || self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("invalid denoiser config {self:?}")));
        }
        Ok(())
    }
}

pub struct DenoiserInput<'a> {
    pub x_t: &'a LatentClip,
    /// Conditioning latents (albedo for relighting, lit frames for delighting).
    pub cond: &'a LatentClip,
    /// Per-frame binary mask; 1 marks frames carried over from a previous window.
    pub mask: &'a [f64],
    pub t: f64,
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    conv1: Conv,
    scale: Linear,
    shift: Linear,
    conv2: Conv,
}

impl ResBlock {
    fn new(b: &mut Builder, name: &str, cfg: &DenoiserConfig) -> Result<Self> {
        let w = cfg.width;
        Ok(Self {
            conv1: Conv::new(b, &format!("{name}.conv1"), w, w, 3, 1, Init::Fan(1.0), false)?,
            scale: Linear::new(b, &format!("{name}.film_scale"), cfg.time_dim, w, true, Init::Fan(0.5), false)?,
            shift: Linear::new(b, &format!("{name}.film_shift"), cfg.time_dim, w, true, Init::Fan(0.5), false)?,
            conv2: Conv::new(b, &format!("{name}.conv2"), w, w, 3, 1, Init::Fan(0.5), false)?,
        })
    }

    fn apply(&self, tape: &mut Tape, x: Var, temb: Var, dims: (usize, usize, usize)) -> Result<Var> {
        let (f, h, w) = dims;
        let a = tape.silu(x);
        let (a, _, _) = self.conv1.apply(tape, a, f, h, w)?;
        let s = self.scale.apply(tape, temb)?;
        let sh = self.shift.apply(tape, temb)?;
        let a = tape.film(a, s, sh)?;
        let a = tape.silu(a);
        let (a, _, _) = self.conv2.apply(tape, a, f, h, w)?;
        tape.add(x, a)
    }
}

/// Attention across frames at each spatial position, added through a
/// zero-initialized per-channel gate.
#[derive(Debug, Clone, Copy)]
struct TemporalMix {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    gate: usize,
}

impl TemporalMix {
    fn new(b: &mut Builder, name: &str, cfg: &DenoiserConfig) -> Result<Self> {
        let (w, a) = (cfg.width, cfg.temporal_dim);
        Ok(Self {
            q: Linear::new(b, &format!("{name}.q"), w, a, false, Init::Fan(1.0), true)?,
            k: Linear::new(b, &format!("{name}.k"), w, a, false, Init::Fan(1.0), true)?,
            v: Linear::new(b, &format!("{name}.v"), w, a, false, Init::Fan(1.0), true)?,
            o: Linear::new(b, &format!("{name}.o"), a, w, false, Init::Fan(1.0), true)?,
            gate: b.tensor(&format!("{name}.gate"), 1, w, Init::Zeros, true)?,
        })
    }

    fn apply(&self, tape: &mut Tape, x: Var, frames: usize, positions: usize) -> Result<Var> {
        let to_pos = Arc::new(RowMix::frames_to_positions(frames, positions));
        let to_frames = Arc::new(RowMix::positions_to_frames(frames, positions));
        let p = tape.mix(x, to_pos)?;
        let q = self.q.apply(tape, p)?;
        let k = self.k.apply(tape, p)?;
        let v = self.v.apply(tape, p)?;
        let a = tape.attention(q, k, v, positions)?;
        let o = self.o.apply(tape, a)?;
        let o = tape.mix(o, to_frames)?;
        let g = tape.param(self.gate);
        let o = tape.mul_row(o, g)?;
        tape.add(x, o)
    }
}

/// Every position attends to the condition context rows.
#[derive(Debug, Clone, Copy)]
struct CrossAttn {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

impl CrossAttn {
    fn new(b: &mut Builder, name: &str, cfg: &DenoiserConfig) -> Result<Self> {
        let (w, a, d) = (cfg.width, cfg.cross_dim, cfg.context_dim);
        Ok(Self {
            q: Linear::new(b, &format!("{name}.q"), w, a, false, Init::Fan(1.0), false)?,
            k: Linear::new(b, &format!("{name}.k"), d, a, false, Init::Fan(1.0), false)?,
            v: Linear::new(b, &format!("{name}.v"), d, a, false, Init::Fan(1.0), false)?,
            o: Linear::new(b, &format!("{name}.o"), a, w, false, Init::Fan(0.5), false)?,
        })
    }

    fn apply(&self, tape: &mut Tape, x: Var, ctx: Var) -> Result<Var> {
        let q = self.q.apply(tape, x)?;
        let k = self.k.apply(tape, ctx)?;
        let v = self.v.apply(tape, ctx)?;
        let a = tape.attention(q, k, v, 1)?;
        let o = self.o.apply(tape, a)?;
        tape.add(x, o)
    }
}

#[derive(Debug, Clone)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    conv_in: Conv,
    time1: Linear,
    time2: Linear,
    res0: ResBlock,
    temporal0: TemporalMix,
    cross0: CrossAttn,
    res1: ResBlock,
    temporal1: TemporalMix,
    cross1: CrossAttn,
    res_up: ResBlock,
    conv_out: Conv,
    skip: Linear,
}

/// Sinusoidal features of `t` with frequencies spread from 1 to 1000.
pub(crate) fn time_features(t: f64, dim: usize) -> Mat {
    let half = dim / 2;
    let mut data = Vec::with_capacity(dim);
    let span = (half.max(2) - 1) as f64;
    let freqs: Vec<f64> = (0..half).map(|k| (1000f64.ln() * k as f64 / span).exp()).collect();
    data.extend(freqs.iter().map(|w| (w * t).sin()));
    data.extend(freqs.iter().map(|w| (w * t).cos()));
    Mat {
        rows: 1,
        cols: dim,
        data,
    }
}

fn check_finite(tape: &Tape, v: Var, layer: usize) -> Result<()> {
    if !tape.value(v).is_finite() {
        return Err(Error::NonFinite(format!("denoiser activation at layer {layer}")));
    }
    Ok(())
}

impl Denoiser {
    pub(crate) fn build(cfg: DenoiserConfig, b: &mut Builder) -> Result<Self> {
        cfg.validate()?;
        let (c, w, e) = (cfg.latent_channels, cfg.width, cfg.time_dim);
        Ok(Self {
            cfg,
            conv_in: Conv::new(b, "den.conv_in", 2 * c + 1, w, 3, 1, Init::Fan(1.0), false)?,
            time1: Linear::new(b, "den.time1", e, e, true, Init::Fan(1.0), false)?,
            time2: Linear::new(b, "den.time2", e, e, true, Init::Fan(1.0), false)?,
            res0: ResBlock::new(b, "den.res0", &cfg)?,
            temporal0: TemporalMix::new(b, "den.temporal0", &cfg)?,
            cross0: CrossAttn::new(b, "den.cross0", &cfg)?,
            res1: ResBlock::new(b, "den.res1", &cfg)?,
            temporal1: TemporalMix::new(b, "den.temporal1", &cfg)?,
            cross1: CrossAttn::new(b, "den.cross1", &cfg)?,
            res_up: ResBlock::new(b, "den.res_up", &cfg)?,
            conv_out: Conv::new(b, "den.conv_out", w, c, 3, 1, Init::Zeros, false)?,
            skip: Linear::new(b, "den.skip", e, c, true, Init::Zeros, false)?,
        })
    }

    /// Standalone denoiser with freshly initialized parameters.
    pub fn init(cfg: DenoiserConfig, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let den = Self::build(
            cfg,
            &mut Builder::Init {
                store: &mut store,
                rng: &mut rng,
            },
        )?;
        Ok((den, store))
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// MSE between `v̂` and `target_v` plus gradients for every parameter.
    pub fn loss_and_gradients(
        &self,
        params: &ParamStore,
        input: &DenoiserInput,
        context: &Mat,
        target_v: &LatentClip,
    ) -> Result<(f64, Grads)> {
        input.x_t.check_same_shape(target_v, "v target")?;
        let mut tape = Tape::new(params);
        let ctx = tape.leaf(context.clone());
        let out = self.forward(&mut tape, input, ctx)?;
        let loss = tape.mse(out, &target_v.to_mat())?;
        let value = tape.value(loss).data[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("denoiser loss".into()));
        }
        Ok((value, tape.backward(loss)?))
    }

    fn check_input(&self, input: &DenoiserInput, ctx_cols: usize) -> Result<()> {
        let x = input.x_t;
        x.check_same_shape(input.cond, "denoiser conditioning latents")?;
        if x.channels != self.cfg.latent_channels {
            return Err(Error::Shape(format!(
                "{} latent channels, model expects {}",
                x.channels, self.cfg.latent_channels
            )));
        }
        if !x.height.is_multiple_of(2) || !x.width.is_multiple_of(2) || x.frames == 0 {
            return Err(Error::Shape(format!(
                "latent grid {}x{} must be even and non-empty",
                x.height, x.width
            )));
        }
        if input.mask.len() != x.frames {
            return Err(Error::Shape(format!(
                "{} mask values for {} frames",
                input.mask.len(),
                x.frames
            )));
        }
        if ctx_cols != self.cfg.context_dim {
            return Err(Error::Shape(format!(
                "context width {ctx_cols}, model expects {}",
                self.cfg.context_dim
            )));
        }
        if !(0.0..=1.0).contains(&input.t) {
            return Err(Error::InvalidArgument(format!("t = {} outside [0, 1]", input.t)));
        }
        Ok(())
    }

    /// Predicts `v̂` for every latent position; the output has the shape of `x_t`.
    pub fn forward(&self, tape: &mut Tape, input: &DenoiserInput, ctx: Var) -> Result<Var> {
        self.check_input(input, tape.value(ctx).cols)?;
        let x = input.x_t;
        let (f, h, w) = (x.frames, x.height, x.width);
        let c = x.channels;
        let rows = f * h * w;

        let mut stacked = Vec::with_capacity(rows * (2 * c + 1));
        for r in 0..rows {
            stacked.extend_from_slice(&x.data[r * c..(r + 1) * c]);
            stacked.extend_from_slice(&input.cond.data[r * c..(r + 1) * c]);
            stacked.push(input.mask[r / (h * w)]);
        }
        let xin = tape.leaf(Mat::from_vec(rows, 2 * c + 1, stacked)?);

        let tf = tape.leaf(time_features(input.t, self.cfg.time_dim));
        let temb = self.time1.apply(tape, tf)?;
        let temb = tape.silu(temb);
        let temb = self.time2.apply(tape, temb)?;
        let temb = tape.silu(temb);

        let (h0, _, _) = self.conv_in.apply(tape, xin, f, h, w)?;
        check_finite(tape, h0, 0)?;
        let h0 = self.res0.apply(tape, h0, temb, (f, h, w))?;
        let h0 = self.temporal0.apply(tape, h0, f, h * w)?;
        let h0 = self.cross0.apply(tape, h0, ctx)?;
        check_finite(tape, h0, 1)?;

        let (h2, w2) = (h / 2, w / 2);
        let d = tape.mix(h0, Arc::new(RowMix::avg_pool2(f, h, w)?))?;
        let d = self.res1.apply(tape, d, temb, (f, h2, w2))?;
        let d = self.temporal1.apply(tape, d, f, h2 * w2)?;
        let d = self.cross1.apply(tape, d, ctx)?;
        check_finite(tape, d, 2)?;

        let u = tape.mix(d, Arc::new(RowMix::upsample2(f, h2, w2)))?;
        let u = tape.add(u, h0)?;
        let u = self.res_up.apply(tape, u, temb, (f, h, w))?;
        check_finite(tape, u, 3)?;
        let u = tape.silu(u);
        let (out, _, _) = self.conv_out.apply(tape, u, f, h, w)?;
        // The noise part of v passes straight through with a per-channel,
        // time-dependent gain, so it need not squeeze through `width` features.
        let gain = self.skip.apply(tape, temb)?;
        let xt = tape.leaf(x.to_mat());
        let skip = tape.mul_row(xt, gain)?;
        let out = tape.add(out, skip)?;
        check_finite(tape, out, 4)?;
        Ok(out)
    }
}
