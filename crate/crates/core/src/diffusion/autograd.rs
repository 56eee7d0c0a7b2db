//! Small reverse-mode autodiff over dense f64 matrices.
//!
//! Activations are `rows × channels` with rows ordered frame-major
//! (`[frame][y][x]`). Every op has a hand-written backward; gradients flow
//! only into nodes that depend on a parameter.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `c = op(a)·op(b) + beta·c` with `op(a)` of shape `m×k` and `op(b)` of shape `k×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Sparse linear map between row sets: `out[o] = Σ w·in[i]`. Covers
/// permutations, pooling, upsampling and broadcasting.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMix {
    pub in_rows: usize,
    pub out_rows: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl RowMix {
    pub fn new(in_rows: usize, out_rows: usize, entries: Vec<(u32, u32, f64)>) -> Result<Self> {
        if let Some(e) = entries
            .iter()
            .find(|e| e.0 as usize >= out_rows || e.1 as usize >= in_rows)
        {
            return Err(Error::Shape(format!(
                "row mix entry {e:?} outside {in_rows}->{out_rows}"
            )));
        }
        Ok(Self {
            in_rows,
            out_rows,
            entries,
        })
    }

    /// `out[o] = in[src[o]]`.
    pub fn gather(in_rows: usize, src: &[usize]) -> Result<Self> {
        Self::new(
            in_rows,
            src.len(),
            src.iter()
                .enumerate()
                .map(|(o, &i)| (o as u32, i as u32, 1.0))
                .collect(),
        )
    }

    /// `[frame][pos]` rows to `[pos][frame]` rows.
    pub fn frames_to_positions(frames: usize, positions: usize) -> Self {
        let src: Vec<usize> = (0..positions * frames)
            .map(|o| (o % frames) * positions + o / frames)
            .collect();
        Self::gather(frames * positions, &src).expect("valid permutation")
    }

    pub fn positions_to_frames(frames: usize, positions: usize) -> Self {
        let src: Vec<usize> = (0..frames * positions)
            .map(|o| (o % positions) * frames + o / positions)
            .collect();
        Self::gather(frames * positions, &src).expect("valid permutation")
    }

    /// 2×2 average pooling per frame; `h` and `w` must be even.
    pub fn avg_pool2(frames: usize, h: usize, w: usize) -> Result<Self> {
        if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
            return Err(Error::Shape(format!("cannot pool a {h}x{w} grid")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut entries = Vec::with_capacity(frames * h * w);
        for f in 0..frames {
            for y in 0..ho {
                for x in 0..wo {
                    let o = (f * ho + y) * wo + x;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = (f * h + 2 * y + dy) * w + 2 * x + dx;
                        entries.push((o as u32, i as u32, 0.25));
                    }
                }
            }
        }
        Self::new(frames * h * w, frames * ho * wo, entries)
    }

    /// Nearest-neighbour 2× upsampling per frame from an `h×w` grid.
    pub fn upsample2(frames: usize, h: usize, w: usize) -> Self {
        let (ho, wo) = (2 * h, 2 * w);
        let src: Vec<usize> = (0..frames * ho * wo)
            .map(|o| {
                let f = o / (ho * wo);
                let y = (o / wo) % ho;
                let x = o % wo;
                (f * h + y / 2) * w + x / 2
            })
            .collect();
        Self::gather(frames * h * w, &src).expect("valid upsample")
    }

    /// Repeats a single row `n` times.
    pub fn broadcast(n: usize) -> Self {
        Self::gather(1, &vec![0; n]).expect("valid broadcast")
    }

    fn forward(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(self.out_rows, x.cols);
        let c = x.cols;
        for &(o, i, w) in &self.entries {
            let (o, i) = (o as usize, i as usize);
            let src = &x.data[i * c..(i + 1) * c];
            for (d, s) in out.data[o * c..(o + 1) * c].iter_mut().zip(src) {
                *d += w * s;
            }
        }
        out
    }

    fn backward(&self, g: &Mat) -> Mat {
        let mut out = Mat::zeros(self.in_rows, g.cols);
        let c = g.cols;
        for &(o, i, w) in &self.entries {
            let (o, i) = (o as usize, i as usize);
            let src = &g.data[o * c..(o + 1) * c];
            for (d, s) in out.data[i * c..(i + 1) * c].iter_mut().zip(src) {
                *d += w * s;
            }
        }
        out
    }
}

/// Square-kernel convolution patch extraction with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// 3×3, padding 1.
    pub fn same3(frames: usize, height: usize, width: usize, channels: usize, stride: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            kernel: 3,
            stride,
            pad: 1,
        }
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn valid(&self) -> bool {
        self.stride > 0
            && self.kernel > 0
            && self.height + 2 * self.pad >= self.kernel
            && self.width + 2 * self.pad >= self.kernel
    }

    pub fn in_rows(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn out_rows(&self) -> usize {
        self.frames * self.out_height() * self.out_width()
    }

    pub fn patch_cols(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    /// Calls `f(out_row, patch_col_offset, in_row)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ho, wo) = (self.out_height(), self.out_width());
        for fr in 0..self.frames {
            for oy in 0..ho {
                for ox in 0..wo {
                    let o = (fr * ho + oy) * wo + ox;
                    for ky in 0..self.kernel {
                        let y = (oy * self.stride + ky) as isize - self.pad as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let x = (ox * self.stride + kx) as isize - self.pad as isize;
                            if x < 0 || x >= self.width as isize {
                                continue;
                            }
                            let i = (fr * self.height + y as usize) * self.width + x as usize;
                            f(o, (ky * self.kernel + kx) * self.channels, i);
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Film { x: Var, scale: Var, shift: Var },
    Add(Var, Var),
    Silu(Var),
    Im2Col(Var, ConvGeom),
    Mix(Var, Arc<RowMix>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        probs: Vec<f64>,
    },
    Mse(Var, Mat),
}

#[derive(Debug)]
struct Node {
    value: Option<Mat>,
    op: Op,
    needs_grad: bool,
}

/// Named dense tensors; `temporal` marks the tensors trained in stage two.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Mat>,
    temporal: Vec<bool>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, temporal: bool) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        self.temporal.push(temporal);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: usize) -> &Mat {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Mat {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn is_temporal(&self, id: usize) -> bool {
        self.temporal[id]
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(
            self.tensors
                .iter()
                .map(|t| Mat::zeros(t.rows, t.cols))
                .collect(),
        )
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Mat>);

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        assert!(id < self.params.len(), "parameter {id} out of range");
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn shape_err(&self, what: &str, a: Var, b: Var) -> Error {
        Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols != bm.rows {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = Mat::zeros(am.rows, bm.cols);
        gemm(am.rows, am.cols, bm.cols, &am.data, false, &bm.data, false, &mut out.data, 0.0);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a + b` with `b` a single row broadcast over `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if bm.rows != 1 || bm.cols != am.cols {
            return Err(self.shape_err("add_row", a, b));
        }
        let mut out = am.clone();
        for row in out.data.chunks_mut(am.cols) {
            for (o, r) in row.iter_mut().zip(&bm.data) {
                *o += r;
            }
        }
        Ok(self.push(out, Op::AddRow(a, b), &[a, b]))
    }

    /// `a ⊙ b` with `b` a single row broadcast over `a`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if bm.rows != 1 || bm.cols != am.cols {
            return Err(self.shape_err("mul_row", a, b));
        }
        let mut out = am.clone();
        for row in out.data.chunks_mut(am.cols) {
            for (o, r) in row.iter_mut().zip(&bm.data) {
                *o *= r;
            }
        }
        Ok(self.push(out, Op::MulRow(a, b), &[a, b]))
    }

    /// Feature-wise modulation `x ⊙ (1 + scale) + shift` with row-vector scale/shift.
    pub fn film(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let (xm, sm, bm) = (self.value(x), self.value(scale), self.value(shift));
        if sm.shape() != (1, xm.cols) || bm.shape() != (1, xm.cols) {
            return Err(self.shape_err("film", x, scale));
        }
        let mut out = xm.clone();
        for row in out.data.chunks_mut(xm.cols) {
            for ((o, s), b) in row.iter_mut().zip(&sm.data).zip(&bm.data) {
                *o = *o * (1.0 + s) + b;
            }
        }
        Ok(self.push(out, Op::Film { x, scale, shift }, &[x, scale, shift]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.shape() != bm.shape() {
            return Err(self.shape_err("add", a, b));
        }
        let mut out = am.clone();
        out.add_assign(bm);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let data = am.data.iter().map(|&x| x * sigmoid(x)).collect();
        let out = Mat {
            rows: am.rows,
            cols: am.cols,
            data,
        };
        self.push(out, Op::Silu(a), &[a])
    }

    pub fn im2col(&mut self, x: Var, geom: ConvGeom) -> Result<Var> {
        let xm = self.value(x);
        if !geom.valid() || xm.shape() != (geom.in_rows(), geom.channels) {
            return Err(Error::Shape(format!(
                "im2col expects {}x{}, got {:?}",
                geom.in_rows(),
                geom.channels,
                xm.shape()
            )));
        }
        let pc = geom.patch_cols();
        let c = geom.channels;
        let mut out = Mat::zeros(geom.out_rows(), pc);
        geom.for_each_tap(|o, off, i| {
            out.data[o * pc + off..o * pc + off + c].copy_from_slice(&xm.data[i * c..(i + 1) * c]);
        });
        Ok(self.push(out, Op::Im2Col(x, geom), &[x]))
    }

    pub fn mix(&mut self, x: Var, mix: Arc<RowMix>) -> Result<Var> {
        let xm = self.value(x);
        if xm.rows != mix.in_rows {
            return Err(Error::Shape(format!(
                "row mix expects {} rows, got {}",
                mix.in_rows, xm.rows
            )));
        }
        let out = mix.forward(xm);
        Ok(self.push(out, Op::Mix(x, mix), &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows;
        if parts.iter().any(|&p| self.value(p).rows != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pm = self.value(p);
                out.data[r * cols + off..r * cols + off + pm.cols].copy_from_slice(pm.row(r));
                off += pm.cols;
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols;
        if parts.iter().any(|&p| self.value(p).cols != cols) {
            return Err(Error::Shape("concat_rows: column counts differ".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let out = Mat {
            rows: data.len() / cols.max(1),
            cols,
            data,
        };
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Single-head softmax attention applied independently to `groups`
    /// consecutive row blocks of `q` and of `k`/`v`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize) -> Result<Var> {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        if groups == 0
            || qm.rows % groups != 0
            || km.rows % groups != 0
            || km.rows != vm.rows
            || qm.cols != km.cols
        {
            return Err(Error::Shape(format!(
                "attention: q {:?}, k {:?}, v {:?}, {groups} groups",
                qm.shape(),
                km.shape(),
                vm.shape()
            )));
        }
        let (gq, gk, a, dv) = (qm.rows / groups, km.rows / groups, qm.cols, vm.cols);
        let scale = 1.0 / (a as f64).sqrt();
        let mut probs = vec![0.0; groups * gq * gk];
        let mut out = Mat::zeros(qm.rows, dv);
        for g in 0..groups {
            let p = &mut probs[g * gq * gk..(g + 1) * gq * gk];
            gemm(gq, a, gk, &qm.data[g * gq * a..], false, &km.data[g * gk * a..], true, p, 0.0);
            for row in p.chunks_mut(gk) {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * scale));
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x * scale - max).exp();
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x /= sum);
            }
            gemm(gq, gk, dv, p, false, &vm.data[g * gk * dv..], false, &mut out.data[g * gq * dv..], 0.0);
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                groups,
                probs,
            },
            &[q, k, v],
        ))
    }

    /// Mean squared error against a constant target, as a 1×1 value.
    pub fn mse(&mut self, x: Var, target: &Mat) -> Result<Var> {
        let xm = self.value(x);
        if xm.shape() != target.shape() {
            return Err(Error::Shape(format!(
                "mse: {:?} vs target {:?}",
                xm.shape(),
                target.shape()
            )));
        }
        let n = xm.data.len().max(1) as f64;
        let sum: f64 = xm
            .data
            .iter()
            .zip(&target.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let out = Mat::filled(1, 1, sum / n);
        Ok(self.push(out, Op::Mse(x, target.clone()), &[x]))
    }

    /// Reverse pass from a 1×1 output.
    pub fn backward(&self, out: Var) -> Result<Grads> {
        if self.value(out).shape() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar output".into()));
        }
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::filled(1, 1, 1.0));
        let mut param_grads = self.params.zeros_like();

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, d: Mat, grads: &mut Vec<Option<Mat>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => param_grads.0[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let mut da = Mat::zeros(am.rows, am.cols);
                        gemm(am.rows, g.cols, am.cols, &g.data, false, &bm.data, true, &mut da.data, 0.0);
                        send(*a, da, &mut grads);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = Mat::zeros(bm.rows, bm.cols);
                        gemm(bm.rows, am.rows, bm.cols, &am.data, true, &g.data, false, &mut db.data, 0.0);
                        send(*b, db, &mut grads);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.nodes[b.0].needs_grad {
                        send(*b, col_sums(&g), &mut grads);
                    }
                    send(*a, g, &mut grads);
                }
                Op::MulRow(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    if self.nodes[b.0].needs_grad {
                        let mut db = Mat::zeros(1, am.cols);
                        for (grow, arow) in g.data.chunks(am.cols).zip(am.data.chunks(am.cols)) {
                            for ((d, gv), av) in db.data.iter_mut().zip(grow).zip(arow) {
                                *d += gv * av;
                            }
                        }
                        send(*b, db, &mut grads);
                    }
                    if self.nodes[a.0].needs_grad {
                        let mut da = g.clone();
                        for row in da.data.chunks_mut(am.cols) {
                            for (d, bv) in row.iter_mut().zip(&bm.data) {
                                *d *= bv;
                            }
                        }
                        send(*a, da, &mut grads);
                    }
                }
                Op::Film { x, scale, shift } => {
                    let (xm, sm) = (self.value(*x), self.value(*scale));
                    let c = xm.cols;
                    if self.nodes[scale.0].needs_grad {
                        let mut ds = Mat::zeros(1, c);
                        for (grow, xrow) in g.data.chunks(c).zip(xm.data.chunks(c)) {
                            for ((d, gv), xv) in ds.data.iter_mut().zip(grow).zip(xrow) {
                                *d += gv * xv;
                            }
                        }
                        send(*scale, ds, &mut grads);
                    }
                    if self.nodes[shift.0].needs_grad {
                        send(*shift, col_sums(&g), &mut grads);
                    }
                    if self.nodes[x.0].needs_grad {
                        let mut dx = g;
                        for row in dx.data.chunks_mut(c) {
                            for (d, s) in row.iter_mut().zip(&sm.data) {
                                *d *= 1.0 + s;
                            }
                        }
                        send(*x, dx, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    send(*b, g.clone(), &mut grads);
                    send(*a, g, &mut grads);
                }
                Op::Silu(a) => {
                    let am = self.value(*a);
                    let mut d = g;
                    for (dv, &x) in d.data.iter_mut().zip(&am.data) {
                        let s = sigmoid(x);
                        *dv *= s * (1.0 + x * (1.0 - s));
                    }
                    send(*a, d, &mut grads);
                }
                Op::Im2Col(x, geom) => {
                    let c = geom.channels;
                    let pc = geom.patch_cols();
                    let mut dx = Mat::zeros(geom.in_rows(), c);
                    geom.for_each_tap(|o, off, i| {
                        let src = &g.data[o * pc + off..o * pc + off + c];
                        for (d, s) in dx.data[i * c..(i + 1) * c].iter_mut().zip(src) {
                            *d += s;
                        }
                    });
                    send(*x, dx, &mut grads);
                }
                Op::Mix(x, mix) => send(*x, mix.backward(&g), &mut grads),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        if self.nodes[p.0].needs_grad {
                            let mut d = Mat::zeros(g.rows, pc);
                            for r in 0..g.rows {
                                d.data[r * pc..(r + 1) * pc]
                                    .copy_from_slice(&g.data[r * g.cols + off..r * g.cols + off + pc]);
                            }
                            send(p, d, &mut grads);
                        }
                        off += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).data.len();
                        if self.nodes[p.0].needs_grad {
                            let pm = self.value(p);
                            let d = Mat {
                                rows: pm.rows,
                                cols: pm.cols,
                                data: g.data[off..off + n].to_vec(),
                            };
                            send(p, d, &mut grads);
                        }
                        off += n;
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    groups,
                    probs,
                } => {
                    let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                    let groups = *groups;
                    let (gq, gk, a, dv) = (qm.rows / groups, km.rows / groups, qm.cols, vm.cols);
                    let scale = 1.0 / (a as f64).sqrt();
                    let mut dq = Mat::zeros(qm.rows, a);
                    let mut dk = Mat::zeros(km.rows, a);
                    let mut dvm = Mat::zeros(vm.rows, dv);
                    let mut dp = vec![0.0; gq * gk];
                    for grp in 0..groups {
                        let p = &probs[grp * gq * gk..(grp + 1) * gq * gk];
                        let go = &g.data[grp * gq * dv..(grp + 1) * gq * dv];
                        gemm(gk, gq, dv, p, true, go, false, &mut dvm.data[grp * gk * dv..], 0.0);
                        gemm(gq, dv, gk, go, false, &vm.data[grp * gk * dv..], true, &mut dp, 0.0);
                        for (prow, drow) in p.chunks(gk).zip(dp.chunks_mut(gk)) {
                            let dot: f64 = prow.iter().zip(drow.iter()).map(|(x, y)| x * y).sum();
                            for (d, &pv) in drow.iter_mut().zip(prow) {
                                *d = pv * (*d - dot) * scale;
                            }
                        }
                        gemm(gq, gk, a, &dp, false, &km.data[grp * gk * a..], false, &mut dq.data[grp * gq * a..], 0.0);
                        gemm(gk, gq, a, &dp, true, &qm.data[grp * gq * a..], false, &mut dk.data[grp * gk * a..], 0.0);
                    }
                    send(*q, dq, &mut grads);
                    send(*k, dk, &mut grads);
                    send(*v, dvm, &mut grads);
                }
                Op::Mse(x, target) => {
                    let xm = self.value(*x);
                    let n = xm.data.len().max(1) as f64;
                    let s = 2.0 * g.data[0] / n;
                    let data = xm.data.iter().zip(&target.data).map(|(a, b)| s * (a - b)).collect();
                    send(
                        *x,
                        Mat {
                            rows: xm.rows,
                            cols: xm.cols,
                            data,
                        },
                        &mut grads,
                    );
                }
            }
        }
        Ok(param_grads)
    }
}

fn col_sums(g: &Mat) -> Mat {
    let mut out = Mat::zeros(1, g.cols);
    for row in g.data.chunks(g.cols) {
        for (o, v) in out.data.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of `f` over every scalar of every parameter.
    fn check(params: &mut ParamStore, f: impl Fn(&mut Tape) -> Var) {
        let grads = {
            let mut tape = Tape::new(params);
            let out = f(&mut tape);
            tape.backward(out).unwrap()
        };
        for id in 0..params.len() {
            for j in 0..params.get(id).data.len() {
                let w = params.get(id).data[j];
                let h = 1e-5 * w.abs().max(1.0);
                params.get_mut(id).data[j] = w + h;
                let up = {
                    let mut tape = Tape::new(params);
                    let o = f(&mut tape);
                    tape.value(o).data[0]
                };
                params.get_mut(id).data[j] = w - h;
                let down = {
                    let mut tape = Tape::new(params);
                    let o = f(&mut tape);
                    tape.value(o).data[0]
                };
                params.get_mut(id).data[j] = w;
                let fd = (up - down) / (2.0 * h);
                let an = grads.0[id].data[j];
                assert!(
                    (fd - an).abs() <= 1e-6 * fd.abs().max(1e-3),
                    "{}[{j}]: fd {fd} vs analytic {an}",
                    params.name(id)
                );
            }
        }
    }

    #[test]
    fn gemm_handles_transposes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // aᵀ·a is 3x3; check one entry
        let mut d = [0.0; 9];
        gemm(3, 2, 3, &a, true, &a, false, &mut d, 0.0);
        assert_eq!(d[0], 1.0 + 16.0);
        assert_eq!(d[5], 2.0 * 3.0 + 5.0 * 6.0);
        let mut e = [0.0; 4];
        gemm(2, 3, 2, &a, false, &a, true, &mut e, 0.0);
        assert_eq!(e, [14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn row_mix_permutations_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 12, 2);
        let a = RowMix::frames_to_positions(3, 4);
        let b = RowMix::positions_to_frames(3, 4);
        assert_eq!(b.forward(&a.forward(&x)), x);
        // row (pos 1, frame 2) comes from frame 2, pos 1
        assert_eq!(a.forward(&x).row(1 * 3 + 2), x.row(2 * 4 + 1));
    }

    #[test]
    fn pooling_and_upsampling_shapes() {
        let x = Mat::from_vec(16, 1, (0..16).map(|v| v as f64).collect()).unwrap();
        let p = RowMix::avg_pool2(1, 4, 4).unwrap().forward(&x);
        assert_eq!(p.data, vec![2.5, 4.5, 10.5, 12.5]);
        let u = RowMix::upsample2(1, 2, 2).forward(&p);
        assert_eq!(u.rows, 16);
        assert_eq!(u.data[5], 2.5);
        assert_eq!(u.data[15], 12.5);
        assert!(RowMix::avg_pool2(1, 3, 4).is_err());
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geom = ConvGeom::same3(2, 5, 4, 2, 1);
        let x = random(&mut rng, geom.in_rows(), 2);
        let w = random(&mut rng, 18, 3);
        let params = ParamStore::new();
        let mut tape = Tape::new(&params);
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let cols = tape.im2col(xv, geom).unwrap();
        let y = tape.matmul(cols, wv).unwrap();
        let y = tape.value(y);
        for f in 0..2 {
            for oy in 0..5 {
                for ox in 0..4 {
                    for co in 0..3 {
                        let mut s = 0.0;
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (iy, ix) = (oy as isize + ky - 1, ox as isize + kx - 1);
                                if iy < 0 || iy >= 5 || ix < 0 || ix >= 4 {
                                    continue;
                                }
                                for ci in 0..2 {
                                    let xi = (f * 20 + iy as usize * 4 + ix as usize) * 2 + ci;
                                    let wi = ((ky * 3 + kx) as usize * 2 + ci) * 3 + co;
                                    s += x.data[xi] * w.data[wi];
                                }
                            }
                        }
                        let o = (f * 20 + oy * 4 + ox) * 3 + co;
                        assert!((y.data[o] - s).abs() < 1e-12);
                    }
                }
            }
        }
        let strided = ConvGeom { stride: 2, ..geom };
        assert_eq!((strided.out_height(), strided.out_width()), (3, 2));
        let patch = ConvGeom { kernel: 2, stride: 2, pad: 0, ..geom };
        assert_eq!((patch.out_height(), patch.out_width()), (2, 2));
    }

    #[test]
    fn gradients_match_finite_differences_for_every_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = ConvGeom::same3(2, 4, 4, 2, 2);
        let mut params = ParamStore::new();
        let x = params.add("x", random(&mut rng, geom.in_rows(), 2), false).unwrap();
        let wc = params.add("wc", random(&mut rng, 18, 3), false).unwrap();
        let b = params.add("b", random(&mut rng, 1, 3), false).unwrap();
        let s = params.add("s", random(&mut rng, 1, 3), false).unwrap();
        let sh = params.add("sh", random(&mut rng, 1, 3), false).unwrap();
        let g = params.add("g", random(&mut rng, 1, 3), true).unwrap();
        let ctx = params.add("ctx", random(&mut rng, 5, 3), false).unwrap();
        let target = random(&mut rng, 8, 6);
        let pool = Arc::new(RowMix::frames_to_positions(2, 4));
        let bc = Arc::new(RowMix::broadcast(8));
        check(&mut params, |t| {
            let xv = t.param(x);
            let cols = t.im2col(xv, geom).unwrap();
            let w = t.param(wc);
            let y = t.matmul(cols, w).unwrap();
            let bv = t.param(b);
            let y = t.add_row(y, bv).unwrap();
            let y = t.silu(y);
            let (sv, shv) = (t.param(s), t.param(sh));
            let y = t.film(y, sv, shv).unwrap();
            let p = t.mix(y, pool.clone()).unwrap();
            let a = t.attention(p, p, p, 4).unwrap();
            let gv = t.param(g);
            let a = t.mul_row(a, gv).unwrap();
            let y = t.add(y, a).unwrap();
            let c = t.param(ctx);
            let cross = t.attention(y, c, c, 1).unwrap();
            let bb = t.mix(bv, bc.clone()).unwrap();
            let rows = t.concat_rows(&[cross, bb]).unwrap();
            let rows = t.concat_cols(&[rows, rows]).unwrap();
            let target = Mat::from_vec(16, 6, target.data.iter().chain(&target.data).copied().collect()).unwrap();
            t.mse(rows, &target).unwrap()
        });
    }

    #[test]
    fn constants_receive_no_gradient_work() {
        let mut params = ParamStore::new();
        let w = params.add("w", Mat::filled(2, 1, 0.5), false).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.leaf(Mat::filled(3, 2, 1.0));
        let wv = tape.param(w);
        let y = tape.matmul(x, wv).unwrap();
        let l = tape.mse(y, &Mat::zeros(3, 1)).unwrap();
        let g = tape.backward(l).unwrap();
        // d/dw mean((x·w)²) = 2·(x·w)·x / 3 summed over rows = 2·1·1 = 2
        assert_eq!(g.0[0].data, vec![2.0, 2.0]);
    }
}
