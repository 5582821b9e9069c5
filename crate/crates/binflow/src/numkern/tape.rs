//! Reverse-mode autodiff over a fixed op set.
//!
//! A `Tape` records the forward computation as a flat list of nodes; calling
//! [`Tape::backward`] replays it in reverse, accumulating gradients for every
//! parameter leaf into a [`ParamStore`]. Scope is exactly the ops the U-Net
//! needs — there is no general graph compiler.

use crate::{Error, Result};

use super::ops::{
    conv2d, conv2d_grad_bias, conv2d_grad_input, conv2d_grad_weight, conv2d_transposed,
    conv2d_transposed_grad_input, conv2d_transposed_grad_weight, frame_group_norm_bwd,
    frame_group_norm_fwd, silu, silu_backward, GnStats, Pad2d,
};
use super::{ParamStore, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Leaf { param: Option<String> },
    Conv2d { x: ValueId, w: ValueId, bias: Option<ValueId>, stride: (usize, usize), pad: Pad2d },
    ConvT2d { x: ValueId, w: ValueId, bias: Option<ValueId>, stride: (usize, usize) },
    GroupNorm { x: ValueId, gamma: ValueId, beta: ValueId, stats: GnStats },
    Silu { x: ValueId },
    Add { a: ValueId, b: ValueId },
    /// `b` broadcasts over freq and/or time (those dims are 1 on `b`).
    AddBroadcast { a: ValueId, b: ValueId },
    ConcatChannels { a: ValueId, b: ValueId },
    ConcatTime { a: ValueId, b: ValueId },
    PadFreq { x: ValueId, lo: usize },
    SliceFreq { x: ValueId, start: usize },
    SliceTime { x: ValueId, start: usize },
    TimeStride2 { x: ValueId },
}

struct Node {
    value: Tensor4,
    op: Op,
}

/// Recorded forward computation plus, after `backward`, per-node gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor4>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor4, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor4 {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` root with respect to node `id`.
    /// `None` if the node did not participate or `backward` never ran.
    pub fn grad(&self, id: ValueId) -> Option<&Tensor4> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn input(&mut self, value: Tensor4) -> ValueId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf bound to a named parameter; `backward` accumulates its gradient
    /// into the store.
    pub fn param(&mut self, store: &ParamStore, path: &str) -> Result<ValueId> {
        let value = store.value(path)?.clone();
        Ok(self.push(value, Op::Leaf { param: Some(path.to_string()) }))
    }

    pub fn conv2d(
        &mut self,
        x: ValueId,
        w: ValueId,
        bias: Option<ValueId>,
        stride: (usize, usize),
        pad: Pad2d,
    ) -> Result<ValueId> {
        let bias_vec = bias.map(|b| self.nodes[b.0].value.data().to_vec());
        let out = conv2d(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            bias_vec.as_deref(),
            stride,
            pad,
        )?;
        Ok(self.push(out, Op::Conv2d { x, w, bias, stride, pad }))
    }

    pub fn conv2d_transposed(
        &mut self,
        x: ValueId,
        w: ValueId,
        bias: Option<ValueId>,
        stride: (usize, usize),
    ) -> Result<ValueId> {
        let bias_vec = bias.map(|b| self.nodes[b.0].value.data().to_vec());
        let out = conv2d_transposed(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            bias_vec.as_deref(),
            stride,
        )?;
        Ok(self.push(out, Op::ConvT2d { x, w, bias, stride }))
    }

    pub fn frame_group_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        num_groups: usize,
        eps: f32,
    ) -> Result<ValueId> {
        let (out, stats) = frame_group_norm_fwd(
            &self.nodes[x.0].value,
            num_groups,
            self.nodes[gamma.0].value.data(),
            self.nodes[beta.0].value.data(),
            eps,
        )?;
        Ok(self.push(out, Op::GroupNorm { x, gamma, beta, stats }))
    }

    pub fn silu(&mut self, x: ValueId) -> ValueId {
        let out = silu(&self.nodes[x.0].value);
        self.push(out, Op::Silu { x })
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    /// a + b with b of shape (batch, channels, 1, 1) or (batch, channels, 1, T).
    pub fn add_broadcast(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out = broadcast_add(av, bv)?;
        Ok(self.push(out, Op::AddBroadcast { a, b }))
    }

    pub fn concat_channels(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.nodes[a.0].value.concat_channels(&self.nodes[b.0].value)?;
        Ok(self.push(out, Op::ConcatChannels { a, b }))
    }

    pub fn concat_time(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.nodes[a.0].value.concat_time(&self.nodes[b.0].value)?;
        Ok(self.push(out, Op::ConcatTime { a, b }))
    }

    pub fn pad_freq(&mut self, x: ValueId, lo: usize, hi: usize) -> ValueId {
        let out = self.nodes[x.0].value.pad_freq(lo, hi);
        self.push(out, Op::PadFreq { x, lo })
    }

    pub fn slice_freq(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let out = self.nodes[x.0].value.slice_freq(start, len)?;
        Ok(self.push(out, Op::SliceFreq { x, start }))
    }

    pub fn slice_time(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let out = self.nodes[x.0].value.slice_time(start, len)?;
        Ok(self.push(out, Op::SliceTime { x, start }))
    }

    pub fn time_stride2(&mut self, x: ValueId) -> ValueId {
        let out = self.nodes[x.0].value.time_stride2();
        self.push(out, Op::TimeStride2 { x })
    }

    /// Reverse pass from `root` seeded with `seed` (same shape as the root
    /// value). Gradients of parameter leaves accumulate into `store`; all
    /// other node gradients stay queryable via [`Tape::grad`].
    pub fn backward(&mut self, root: ValueId, seed: Tensor4, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::runtime("backward called with no recorded forward"));
        }
        if root.0 >= self.nodes.len() {
            return Err(Error::runtime("backward root is not a recorded value"));
        }
        if seed.shape() != self.nodes[root.0].value.shape() {
            return Err(Error::config(format!(
                "backward seed shape {:?} != root shape {:?}",
                seed.shape(),
                self.nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor4>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf { param } => {
                    if let Some(path) = param {
                        store.accumulate_grad(path, &g)?;
                    }
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv2d { x, w, bias, stride, pad } => {
                    let (x, w, bias, stride, pad) = (*x, *w, *bias, *stride, *pad);
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let dx = conv2d_grad_input(xv.shape(), wv, &g, stride, pad);
                    let dw = conv2d_grad_weight(xv, &g, wv.shape(), stride, pad);
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, w, dw)?;
                    if let Some(b) = bias {
                        let db = conv2d_grad_bias(&g);
                        let shape = self.nodes[b.0].value.shape();
                        accumulate(&mut grads, b, Tensor4::new(shape, db)?)?;
                    }
                }
                Op::ConvT2d { x, w, bias, stride } => {
                    let (x, w, bias, stride) = (*x, *w, *bias, *stride);
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let dx = conv2d_transposed_grad_input(xv.shape(), wv, &g, stride);
                    let dw = conv2d_transposed_grad_weight(xv, &g, wv.shape(), stride);
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, w, dw)?;
                    if let Some(b) = bias {
                        let db = conv2d_grad_bias(&g);
                        let shape = self.nodes[b.0].value.shape();
                        accumulate(&mut grads, b, Tensor4::new(shape, db)?)?;
                    }
                }
                Op::GroupNorm { x, gamma, beta, stats } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let xv = &self.nodes[x.0].value;
                    let gv = self.nodes[gamma.0].value.data();
                    let (dx, dgamma, dbeta) = frame_group_norm_bwd(xv, &g, stats, gv);
                    let gshape = self.nodes[gamma.0].value.shape();
                    let bshape = self.nodes[beta.0].value.shape();
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, gamma, Tensor4::new(gshape, dgamma)?)?;
                    accumulate(&mut grads, beta, Tensor4::new(bshape, dbeta)?)?;
                }
                Op::Silu { x } => {
                    let x = *x;
                    let dx = silu_backward(&self.nodes[x.0].value, &g);
                    accumulate(&mut grads, x, dx)?;
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone())?;
                    accumulate(&mut grads, b, g.clone())?;
                }
                Op::AddBroadcast { a, b } => {
                    let (a, b) = (*a, *b);
                    let bshape = self.nodes[b.0].value.shape();
                    let db = reduce_to_shape(&g, bshape);
                    accumulate(&mut grads, a, g.clone())?;
                    accumulate(&mut grads, b, db)?;
                }
                Op::ConcatChannels { a, b } => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a.0].value.channels();
                    let cb = self.nodes[b.0].value.channels();
                    let da = slice_channels(&g, 0, ca);
                    let db = slice_channels(&g, ca, cb);
                    accumulate(&mut grads, a, da)?;
                    accumulate(&mut grads, b, db)?;
                }
                Op::ConcatTime { a, b } => {
                    let (a, b) = (*a, *b);
                    let ta = self.nodes[a.0].value.time();
                    let tb = self.nodes[b.0].value.time();
                    let da = g.slice_time(0, ta)?;
                    let db = g.slice_time(ta, tb)?;
                    accumulate(&mut grads, a, da)?;
                    accumulate(&mut grads, b, db)?;
                }
                Op::PadFreq { x, lo } => {
                    let (x, lo) = (*x, *lo);
                    let f = self.nodes[x.0].value.freq();
                    let dx = g.slice_freq(lo, f)?;
                    accumulate(&mut grads, x, dx)?;
                }
                Op::SliceFreq { x, start } => {
                    let (x, start) = (*x, *start);
                    let xshape = self.nodes[x.0].value.shape();
                    let hi = xshape[2] - start - g.freq();
                    let dx = g.pad_freq(start, hi);
                    accumulate(&mut grads, x, dx)?;
                }
                Op::SliceTime { x, start } => {
                    let (x, start) = (*x, *start);
                    let xshape = self.nodes[x.0].value.shape();
                    let mut dx = Tensor4::zeros(xshape);
                    for bi in 0..xshape[0] {
                        for ci in 0..xshape[1] {
                            for fi in 0..xshape[2] {
                                let src = g.row(bi, ci, fi);
                                let dst = dx.row_mut(bi, ci, fi);
                                dst[start..start + src.len()].copy_from_slice(src);
                            }
                        }
                    }
                    accumulate(&mut grads, x, dx)?;
                }
                Op::TimeStride2 { x } => {
                    let x = *x;
                    let xshape = self.nodes[x.0].value.shape();
                    let mut dx = Tensor4::zeros(xshape);
                    for bi in 0..xshape[0] {
                        for ci in 0..xshape[1] {
                            for fi in 0..xshape[2] {
                                let src = g.row(bi, ci, fi);
                                let dst = dx.row_mut(bi, ci, fi);
                                for (to, gv) in src.iter().enumerate() {
                                    dst[2 * to] = *gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, x, dx)?;
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor4>], id: ValueId, delta: Tensor4) -> Result<()> {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

fn broadcast_add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let [ba, ca, _, ta] = a.shape();
    let [bb, cb, fb, tb] = b.shape();
    if ba != bb || ca != cb || fb != 1 || (tb != 1 && tb != ta) {
        return Err(Error::config(format!(
            "broadcast_add shapes incompatible: {:?} + {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    for bi in 0..ba {
        for ci in 0..ca {
            let brow = b.row(bi, ci, 0);
            for fi in 0..a.freq() {
                let row = out.row_mut(bi, ci, fi);
                if tb == 1 {
                    let v = brow[0];
                    for r in row.iter_mut() {
                        *r += v;
                    }
                } else {
                    for (r, v) in row.iter_mut().zip(brow) {
                        *r += v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sum `grad` down to `shape` over the axes where `shape` has size 1.
fn reduce_to_shape(grad: &Tensor4, shape: [usize; 4]) -> Tensor4 {
    let [b, c, _, t] = grad.shape();
    let mut out = Tensor4::zeros(shape);
    for bi in 0..b {
        for ci in 0..c {
            for fi in 0..grad.freq() {
                let src = grad.row(bi, ci, fi);
                let dst = out.row_mut(bi, ci, 0);
                if shape[3] == 1 {
                    let mut acc = 0.0f32;
                    for v in src {
                        acc += v;
                    }
                    dst[0] += acc;
                } else {
                    debug_assert_eq!(shape[3], t);
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
    out
}

fn slice_channels(t: &Tensor4, start: usize, len: usize) -> Tensor4 {
    let [b, _, f, tt] = t.shape();
    let mut out = Tensor4::zeros([b, len, f, tt]);
    for bi in 0..b {
        for ci in 0..len {
            for fi in 0..f {
                let src = t.row(bi, start + ci, fi);
                out.row_mut(bi, ci, fi).copy_from_slice(src);
            }
        }
    }
    out
}
