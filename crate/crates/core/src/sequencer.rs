//! Long clips are generated window by window; each continuation window
//! re-feeds the last frames of the previous prediction and marks them in
//! the mask channel.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::autograd::Mat;
use crate::diffusion::{ddim_sample, LatentClip, VelocityModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub is_first: bool,
    /// Frames shared with the previous window (0 for the first).
    pub realized_overlap: usize,
    /// 1 where the input frame is replaced by an earlier prediction.
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub total: usize,
    pub length: usize,
    pub overlap: usize,
    pub windows: Vec<Window>,
}

impl WindowPlan {
    pub fn starts(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.start).collect()
    }

    /// Absolute frame ranges each window contributes to the stitched output.
    pub fn contributions(&self) -> Vec<std::ops::Range<usize>> {
        self.windows
            .iter()
            .map(|w| w.start + w.realized_overlap..w.start + self.length)
            .collect()
    }
}

/// Greedy cover of `[0, total)` by windows of `length` frames advancing by
/// `length − overlap`; the last window is moved left to end at `total`.
pub fn plan_windows(total: usize, length: usize, overlap: usize) -> Result<WindowPlan> {
    if length == 0 || overlap >= length {
        return Err(Error::InvalidArgument(format!(
            "window length {length} with overlap {overlap}: need 0 <= T < L"
        )));
    }
    if total < length {
        return Err(Error::InvalidArgument(format!(
            "{total} frames is shorter than one {length}-frame window"
        )));
    }
    let mut windows = vec![Window {
        start: 0,
        is_first: true,
        realized_overlap: 0,
        mask: vec![0; length],
    }];
    let mut start = 0;
    while start + length < total {
        let next = (start + length - overlap).min(total - length);
        let mut mask = vec![0; length];
        mask[..overlap].fill(1);
        windows.push(Window {
            start: next,
            is_first: false,
            realized_overlap: start + length - next,
            mask,
        });
        start = next;
    }
    Ok(WindowPlan {
        total,
        length,
        overlap,
        windows,
    })
}

/// Window 0 samples with `seed`; later windows use a seed mixed from `(seed, k)`.
pub fn window_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        return seed;
    }
    let mut z = seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-window record of what was fed to the sampler and what came back.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    pub start: usize,
    pub input: LatentClip,
    pub mask: Vec<f64>,
    pub prediction: LatentClip,
}

pub fn autoregressive_generate(
    model: &dyn VelocityModel,
    input: &LatentClip,
    context: &Mat,
    plan: &WindowPlan,
    steps: usize,
    seed: u64,
) -> Result<LatentClip> {
    autoregressive_generate_traced(model, input, context, plan, steps, seed).map(|(out, _)| out)
}

pub fn autoregressive_generate_traced(
    model: &dyn VelocityModel,
    input: &LatentClip,
    context: &Mat,
    plan: &WindowPlan,
    steps: usize,
    seed: u64,
) -> Result<(LatentClip, Vec<WindowTrace>)> {
    if input.frames != plan.total {
        return Err(Error::Shape(format!(
            "plan covers {} frames, input has {}",
            plan.total, input.frames
        )));
    }
    let mut out = LatentClip::zeros(input.frames, input.height, input.width, input.channels);
    let mut traces: Vec<WindowTrace> = Vec::with_capacity(plan.windows.len());
    for (k, w) in plan.windows.iter().enumerate() {
        let mut cond = input.slice_frames(w.start, plan.length)?;
        let mask: Vec<f64> = w.mask.iter().map(|&m| f64::from(m)).collect();
        if let Some(prev) = traces.last() {
            for (f, &m) in w.mask.iter().enumerate() {
                if m == 1 {
                    let abs = w.start + f;
                    cond.frame_mut(f).copy_from_slice(prev.prediction.frame(abs - prev.start));
                }
            }
        }
        let prediction = ddim_sample(model, &cond, &mask, context, steps, window_seed(seed, k))?;
        for f in w.realized_overlap..plan.length {
            out.frame_mut(w.start + f).copy_from_slice(prediction.frame(f));
        }
        traces.push(WindowTrace {
            start: w.start,
            input: cond,
            mask,
            prediction,
        });
    }
    Ok((out, traces))
}

/// Overlap length for a training sample: 0 with probability 1/2, each of
/// 1..=4 with probability 1/8.
pub fn sample_overlap_t(rng: &mut impl Rng) -> usize {
    let dist = WeightedIndex::new([4u32, 1, 1, 1, 1]).expect("static weights");
    dist.sample(rng)
}
