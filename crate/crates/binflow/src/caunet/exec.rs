//! One U-Net forward, two execution targets.
//!
//! The network topology is written once against the [`Exec`] trait.
//! [`TapeExec`] records onto an autodiff tape with zero time histories (the
//! offline causal padding used in training); [`StreamExec`] runs pure f32
//! inference, reading and updating per-layer temporal carries so chunked
//! calls continue exactly where the previous chunk stopped. A fresh
//! (zero-initialized) stream state reproduces the offline computation.

use crate::numkern::{conv2d, conv2d_transposed, frame_group_norm, silu, Pad2d, ParamStore, Tape, Tensor4, ValueId};
use crate::{Error, Result};

/// Causal convolution kinds used by the blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    /// 3x3, stride 1, time lookback 2, symmetric freq pad.
    Causal3x3,
    /// 4x4, stride 2, time lookback 3, symmetric freq pad; halves both axes.
    Down4x4,
    /// 4x4 transposed, stride 2; doubles both axes. The trailing two raw
    /// time columns overlap the next chunk and are carried, not emitted.
    Up4x4,
    /// 1x1 pointwise; no temporal state.
    Proj1x1,
}

impl ConvKind {
    pub fn lookback(self) -> usize {
        match self {
            ConvKind::Causal3x3 => 2,
            ConvKind::Down4x4 => 3,
            ConvKind::Up4x4 | ConvKind::Proj1x1 => 0,
        }
    }
}

/// Per-layer temporal carries for one solver evaluation, in layer traversal
/// order. Entries are input histories for causal convolutions and raw
/// overlap tails for transposed convolutions; `None` means zero history
/// (identical to the offline causal padding).
#[derive(Clone, Debug, Default)]
pub struct UnetStreamState {
    carries: Vec<Option<Tensor4>>,
    cursor: usize,
}

impl UnetStreamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset_cursor(&mut self) {
        self.cursor = 0;
    }

    fn take(&mut self) -> Option<Tensor4> {
        if self.cursor >= self.carries.len() {
            self.carries.resize(self.cursor + 1, None);
        }
        self.carries[self.cursor].take()
    }

    fn put(&mut self, carry: Tensor4) {
        self.carries[self.cursor] = Some(carry);
        self.cursor += 1;
    }

    pub fn num_layers(&self) -> usize {
        self.carries.len()
    }

    /// Total carried elements; constant across chunks for a fixed config.
    pub fn memory_elements(&self) -> usize {
        self.carries
            .iter()
            .map(|c| c.as_ref().map_or(0, |t| t.numel()))
            .sum()
    }

    /// Overwrite one carry with zeros (test hook for isolation checks).
    pub fn corrupt(&mut self, layer: usize) {
        if let Some(Some(c)) = self.carries.get_mut(layer) {
            c.data_mut().fill(0.0);
        }
    }
}

/// Abstract executor: the forward topology calls these primitives.
pub trait Exec {
    type V: Clone;

    fn causal_conv(&mut self, x: &Self::V, prefix: &str, kind: ConvKind) -> Result<Self::V>;
    fn group_norm(&mut self, x: &Self::V, prefix: &str, groups: usize, eps: f32) -> Result<Self::V>;
    fn silu(&mut self, x: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// a + b where b is (batch, c, 1, 1) or (batch, c, 1, T).
    fn add_broadcast(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn concat_channels(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn time_stride2(&mut self, x: &Self::V) -> Result<Self::V>;
    fn pad_freq(&mut self, x: &Self::V, lo: usize, hi: usize) -> Result<Self::V>;
    fn slice_freq(&mut self, x: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    fn shape(&self, x: &Self::V) -> [usize; 4];
    /// Post-block finite check; streaming inference enforces it, training
    /// checks once at the loss.
    fn check_finite(&mut self, x: &Self::V, what: &str) -> Result<()>;
}

/// Tape-recording executor used for training and gradient inspection.
pub struct TapeExec<'a> {
    pub tape: &'a mut Tape,
    pub store: &'a ParamStore,
}

impl TapeExec<'_> {
    fn weight_bias(&mut self, prefix: &str) -> Result<(ValueId, Option<ValueId>)> {
        let w = self.tape.param(self.store, &format!("{prefix}.weight"))?;
        let bias_path = format!("{prefix}.bias");
        let b = if self.store.contains(&bias_path) {
            Some(self.tape.param(self.store, &bias_path)?)
        } else {
            None
        };
        Ok((w, b))
    }
}

impl Exec for TapeExec<'_> {
    type V = ValueId;

    fn causal_conv(&mut self, x: &ValueId, prefix: &str, kind: ConvKind) -> Result<ValueId> {
        let (w, b) = self.weight_bias(prefix)?;
        match kind {
            ConvKind::Proj1x1 => self.tape.conv2d(*x, w, b, (1, 1), Pad2d::default()),
            ConvKind::Causal3x3 | ConvKind::Down4x4 => {
                let (lookback, stride) = match kind {
                    ConvKind::Causal3x3 => (2, (1, 1)),
                    _ => (3, (2, 2)),
                };
                let [bs, c, f, _] = self.tape.value(*x).shape();
                let zeros = self.tape.input(Tensor4::zeros([bs, c, f, lookback]));
                let ext = self.tape.concat_time(zeros, *x)?;
                self.tape.conv2d(ext, w, b, stride, Pad2d::new(1, 1, 0, 0))
            }
            ConvKind::Up4x4 => {
                let [_, _, f, t] = self.tape.value(*x).shape();
                let raw = self.tape.conv2d_transposed(*x, w, None, (2, 2))?;
                let fc = self.tape.slice_freq(raw, 1, 2 * f)?;
                let emit = self.tape.slice_time(fc, 0, 2 * t)?;
                match b {
                    Some(b) => self.tape.add_broadcast(emit, b),
                    None => Ok(emit),
                }
            }
        }
    }

    fn group_norm(&mut self, x: &ValueId, prefix: &str, groups: usize, eps: f32) -> Result<ValueId> {
        let gamma = self.tape.param(self.store, &format!("{prefix}.gamma"))?;
        let beta = self.tape.param(self.store, &format!("{prefix}.beta"))?;
        self.tape.frame_group_norm(*x, gamma, beta, groups, eps)
    }

    fn silu(&mut self, x: &ValueId) -> Result<ValueId> {
        Ok(self.tape.silu(*x))
    }

    fn add(&mut self, a: &ValueId, b: &ValueId) -> Result<ValueId> {
        self.tape.add(*a, *b)
    }

    fn add_broadcast(&mut self, a: &ValueId, b: &ValueId) -> Result<ValueId> {
        self.tape.add_broadcast(*a, *b)
    }

    fn concat_channels(&mut self, a: &ValueId, b: &ValueId) -> Result<ValueId> {
        self.tape.concat_channels(*a, *b)
    }

    fn time_stride2(&mut self, x: &ValueId) -> Result<ValueId> {
        Ok(self.tape.time_stride2(*x))
    }

    fn pad_freq(&mut self, x: &ValueId, lo: usize, hi: usize) -> Result<ValueId> {
        Ok(self.tape.pad_freq(*x, lo, hi))
    }

    fn slice_freq(&mut self, x: &ValueId, start: usize, len: usize) -> Result<ValueId> {
        self.tape.slice_freq(*x, start, len)
    }

    fn shape(&self, x: &ValueId) -> [usize; 4] {
        self.tape.value(*x).shape()
    }

    fn check_finite(&mut self, _x: &ValueId, _what: &str) -> Result<()> {
        Ok(())
    }
}

/// Pure f32 executor for inference, stateful across chunks.
pub struct StreamExec<'a> {
    pub store: &'a ParamStore,
    pub state: &'a mut UnetStreamState,
}

impl StreamExec<'_> {
    fn bias_vec(&self, prefix: &str) -> Result<Option<Vec<f32>>> {
        let path = format!("{prefix}.bias");
        if self.store.contains(&path) {
            Ok(Some(self.store.value(&path)?.data().to_vec()))
        } else {
            Ok(None)
        }
    }
}

impl Exec for StreamExec<'_> {
    type V = Tensor4;

    fn causal_conv(&mut self, x: &Tensor4, prefix: &str, kind: ConvKind) -> Result<Tensor4> {
        let w = self.store.value(&format!("{prefix}.weight"))?;
        let bias = self.bias_vec(prefix)?;
        match kind {
            ConvKind::Proj1x1 => conv2d(x, w, bias.as_deref(), (1, 1), Pad2d::default()),
            ConvKind::Causal3x3 | ConvKind::Down4x4 => {
                let (lookback, stride) = match kind {
                    ConvKind::Causal3x3 => (2, (1, 1)),
                    _ => (3, (2, 2)),
                };
                let [bs, c, f, t] = x.shape();
                let hist = match self.state.take() {
                    Some(h) => {
                        if h.shape() != [bs, c, f, lookback] {
                            return Err(Error::config(format!(
                                "stream carry shape {:?} does not match layer {prefix} ({:?})",
                                h.shape(),
                                [bs, c, f, lookback]
                            )));
                        }
                        h
                    }
                    None => Tensor4::zeros([bs, c, f, lookback]),
                };
                let ext = hist.concat_time(x)?;
                let out = conv2d(&ext, w, bias.as_deref(), stride, Pad2d::new(1, 1, 0, 0))?;
                self.state.put(ext.slice_time(t, lookback)?);
                Ok(out)
            }
            ConvKind::Up4x4 => {
                let [bs, _, f, t] = x.shape();
                let c_out = w.shape()[1];
                let raw = conv2d_transposed(x, w, None, (2, 2))?;
                let mut fc = raw.slice_freq(1, 2 * f)?;
                if let Some(carry) = self.state.take() {
                    if carry.shape() != [bs, c_out, 2 * f, 2] {
                        return Err(Error::config(format!(
                            "stream carry shape {:?} does not match layer {prefix} ({:?})",
                            carry.shape(),
                            [bs, c_out, 2 * f, 2]
                        )));
                    }
                    for bi in 0..bs {
                        for ci in 0..c_out {
                            for fi in 0..2 * f {
                                let row = fc.row_mut(bi, ci, fi);
                                let crow = carry.row(bi, ci, fi);
                                row[0] += crow[0];
                                row[1] += crow[1];
                            }
                        }
                    }
                }
                let mut emit = fc.slice_time(0, 2 * t)?;
                self.state.put(fc.slice_time(2 * t, 2)?);
                if let Some(bv) = bias {
                    for bi in 0..bs {
                        for (ci, &b) in bv.iter().enumerate() {
                            for fi in 0..2 * f {
                                for v in emit.row_mut(bi, ci, fi) {
                                    *v += b;
                                }
                            }
                        }
                    }
                }
                Ok(emit)
            }
        }
    }

    fn group_norm(&mut self, x: &Tensor4, prefix: &str, groups: usize, eps: f32) -> Result<Tensor4> {
        let gamma = self.store.value(&format!("{prefix}.gamma"))?;
        let beta = self.store.value(&format!("{prefix}.beta"))?;
        frame_group_norm(x, groups, gamma.data(), beta.data(), eps)
    }

    fn silu(&mut self, x: &Tensor4) -> Result<Tensor4> {
        Ok(silu(x))
    }

    fn add(&mut self, a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        a.add(b)
    }

    fn add_broadcast(&mut self, a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        let [bs, c, _, tb] = b.shape();
        let [ba, ca, _, ta] = a.shape();
        if bs != ba || c != ca || (tb != 1 && tb != ta) {
            return Err(Error::config(format!(
                "broadcast shapes incompatible: {:?} + {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = a.clone();
        for bi in 0..bs {
            for ci in 0..c {
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

    fn concat_channels(&mut self, a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        a.concat_channels(b)
    }

    fn time_stride2(&mut self, x: &Tensor4) -> Result<Tensor4> {
        Ok(x.time_stride2())
    }

    fn pad_freq(&mut self, x: &Tensor4, lo: usize, hi: usize) -> Result<Tensor4> {
        Ok(x.pad_freq(lo, hi))
    }

    fn slice_freq(&mut self, x: &Tensor4, start: usize, len: usize) -> Result<Tensor4> {
        x.slice_freq(start, len)
    }

    fn shape(&self, x: &Tensor4) -> [usize; 4] {
        x.shape()
    }

    fn check_finite(&mut self, x: &Tensor4, what: &str) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::runtime(format!("non-finite activation after {what}")));
        }
        Ok(())
    }
}
