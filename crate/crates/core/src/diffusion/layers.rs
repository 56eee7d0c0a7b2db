//! Parameter allocation and the dense/conv building blocks shared by the
//! denoiser and the condition encoders.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::autograd::{ConvGeom, Mat, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    /// Uniform with variance `gain² / fan_in`.
    Fan(f64),
}

/// Allocates fresh tensors or resolves them by name from a loaded store.
pub(crate) enum Builder<'a> {
    Init {
        store: &'a mut ParamStore,
        rng: &'a mut ChaCha8Rng,
    },
    Load {
        store: &'a ParamStore,
        used: usize,
    },
}

impl Builder<'_> {
    pub(crate) fn tensor(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        temporal: bool,
    ) -> Result<usize> {
        match self {
            Builder::Init { store, rng } => {
                let data = match init {
                    Init::Zeros => vec![0.0; rows * cols],
                    Init::Fan(gain) => {
                        let bound = gain * (3.0 / rows as f64).sqrt();
                        (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect()
                    }
                };
                store.add(name, Mat::from_vec(rows, cols, data)?, temporal)
            }
            Builder::Load { store, used } => {
                let id = store.id(name).ok_or_else(|| {
                    Error::InvalidArgument(format!("checkpoint lacks tensor {name}"))
                })?;
                let got = store.get(id).shape();
                if got != (rows, cols) || store.is_temporal(id) != temporal {
                    return Err(Error::InvalidArgument(format!(
                        "tensor {name} is {got:?}, architecture expects ({rows}, {cols})"
                    )));
                }
                *used += 1;
                Ok(id)
            }
        }
    }

    /// Fails if a loaded store holds tensors the architecture did not claim.
    pub(crate) fn finish(&self) -> Result<()> {
        if let Builder::Load { store, used } = self {
            if *used != store.len() {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint has {} tensors, architecture uses {used}",
                    store.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    w: usize,
    b: Option<usize>,
}

impl Linear {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        b: &mut Builder,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        init: Init,
        temporal: bool,
    ) -> Result<Self> {
        let w = b.tensor(&format!("{name}.w"), fan_in, fan_out, init, temporal)?;
        let bias = if bias {
            Some(b.tensor(&format!("{name}.b"), 1, fan_out, Init::Zeros, temporal)?)
        } else {
            None
        };
        Ok(Self { w, b: bias })
    }

    pub(crate) fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Square convolution as patch extraction plus a dense layer. Odd kernels
/// pad to keep the grid at stride 1; even kernels do not pad.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    lin: Linear,
    cin: usize,
    kernel: usize,
    stride: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        b: &mut Builder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        init: Init,
        temporal: bool,
    ) -> Result<Self> {
        Ok(Self {
            lin: Linear::new(b, name, kernel * kernel * cin, cout, true, init, temporal)?,
            cin,
            kernel,
            stride,
        })
    }

    /// Returns the output and its spatial size.
    pub(crate) fn apply(
        &self,
        tape: &mut Tape,
        x: Var,
        frames: usize,
        height: usize,
        width: usize,
    ) -> Result<(Var, usize, usize)> {
        let geom = ConvGeom {
            frames,
            height,
            width,
            channels: self.cin,
            kernel: self.kernel,
            stride: self.stride,
            pad: if self.kernel % 2 == 1 { self.kernel / 2 } else { 0 },
        };
        let cols = tape.im2col(x, geom)?;
        Ok((self.lin.apply(tape, cols)?, geom.out_height(), geom.out_width()))
    }
}
