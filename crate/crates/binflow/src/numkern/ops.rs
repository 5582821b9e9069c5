//! Forward and backward kernels.
//!
//! Convolution is cross-correlation (the ML convention), so weights exported
//! from other frameworks keep their orientation. Reductions use fixed-order
//! unrolled accumulators: results are bit-identical across runs and thread
//! counts within one build.

use rayon::prelude::*;

use crate::{Error, Result};

use super::Tensor4;

/// Spatial padding. `time_lo` is the past side of the time axis; causal
/// convolutions pad only there.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pad2d {
    pub freq_lo: usize,
    pub freq_hi: usize,
    pub time_lo: usize,
    pub time_hi: usize,
}

impl Pad2d {
    pub fn new(freq_lo: usize, freq_hi: usize, time_lo: usize, time_hi: usize) -> Self {
        Pad2d { freq_lo, freq_hi, time_lo, time_hi }
    }

    /// (left, right, top, bottom) with left/right on the time axis and
    /// top/bottom on the frequency axis.
    pub fn from_lrtb(left: usize, right: usize, top: usize, bottom: usize) -> Self {
        Pad2d { freq_lo: top, freq_hi: bottom, time_lo: left, time_hi: right }
    }

    pub fn is_zero(&self) -> bool {
        self.freq_lo == 0 && self.freq_hi == 0 && self.time_lo == 0 && self.time_hi == 0
    }
}

fn pad_input(input: &Tensor4, pad: Pad2d) -> Tensor4 {
    let [b, c, f, t] = input.shape();
    let mut out = Tensor4::zeros([b, c, f + pad.freq_lo + pad.freq_hi, t + pad.time_lo + pad.time_hi]);
    for bi in 0..b {
        for ci in 0..c {
            for fi in 0..f {
                let dst = out.offset(bi, ci, fi + pad.freq_lo, pad.time_lo);
                out.data_mut()[dst..dst + t].copy_from_slice(input.row(bi, ci, fi));
            }
        }
    }
    out
}

fn check_conv_args(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f32]>,
    in_ch_axis: usize,
    out_ch: usize,
    stride: (usize, usize),
) -> Result<()> {
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::config("conv stride must be >= 1"));
    }
    let in_ch = weight.shape()[in_ch_axis];
    if input.channels() != in_ch {
        return Err(Error::config(format!(
            "conv channel mismatch: input has {}, weight expects {}",
            input.channels(),
            in_ch
        )));
    }
    if let Some(b) = bias {
        if b.len() != out_ch {
            return Err(Error::config(format!(
                "bias length {} != out channels {}",
                b.len(),
                out_ch
            )));
        }
    }
    Ok(())
}

/// 2D cross-correlation. `weight` is (out_ch, in_ch, k_freq, k_time);
/// output dims follow floor((in + pad_lo + pad_hi - k) / stride) + 1.
pub fn conv2d(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f32]>,
    stride: (usize, usize),
    pad: Pad2d,
) -> Result<Tensor4> {
    let [oc, ic, kh, kw] = weight.shape();
    check_conv_args(input, weight, bias, 1, oc, stride)?;
    let (sf, st) = stride;
    let padded_store;
    let padded = if pad.is_zero() {
        input
    } else {
        padded_store = pad_input(input, pad);
        &padded_store
    };
    let [b, _, fp, tp] = padded.shape();
    if fp < kh || tp < kw {
        return Err(Error::config(format!(
            "padded input {fp}x{tp} smaller than kernel {kh}x{kw}"
        )));
    }
    let out_f = (fp - kh) / sf + 1;
    let out_t = (tp - kw) / st + 1;
    let mut out = Tensor4::zeros([b, oc, out_f, out_t]);
    let plane = out_f * out_t;
    let wdata = weight.data();

    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, obuf)| {
            let bi = idx / oc;
            let oci = idx % oc;
            if let Some(bv) = bias {
                obuf.fill(bv[oci]);
            }
            for ici in 0..ic {
                let wbase = ((oci * ic) + ici) * kh * kw;
                let w = &wdata[wbase..wbase + kh * kw];
                if kh == 3 && kw == 3 && sf == 1 && st == 1 {
                    for fo in 0..out_f {
                        let r0 = padded.row(bi, ici, fo);
                        let r1 = padded.row(bi, ici, fo + 1);
                        let r2 = padded.row(bi, ici, fo + 2);
                        acc_row_3x3(&mut obuf[fo * out_t..(fo + 1) * out_t], r0, r1, r2, w);
                    }
                } else if kh == 1 && kw == 1 && sf == 1 && st == 1 {
                    // rows are contiguous across freq, treat the plane as one row
                    let wv = w[0];
                    let start = padded.offset(bi, ici, 0, 0);
                    let full = &padded.data()[start..start + plane];
                    for (o, x) in obuf.iter_mut().zip(full) {
                        *o += wv * x;
                    }
                } else if kh == 4 && kw == 4 && sf == 2 && st == 2 {
                    for fo in 0..out_f {
                        let rows = [
                            padded.row(bi, ici, 2 * fo),
                            padded.row(bi, ici, 2 * fo + 1),
                            padded.row(bi, ici, 2 * fo + 2),
                            padded.row(bi, ici, 2 * fo + 3),
                        ];
                        acc_row_4x4_s2(&mut obuf[fo * out_t..(fo + 1) * out_t], rows, w);
                    }
                } else {
                    for fo in 0..out_f {
                        let orow = &mut obuf[fo * out_t..(fo + 1) * out_t];
                        for kf in 0..kh {
                            let irow = padded.row(bi, ici, fo * sf + kf);
                            for kt in 0..kw {
                                let wv = w[kf * kw + kt];
                                if st == 1 {
                                    for (o, x) in orow.iter_mut().zip(&irow[kt..kt + out_t]) {
                                        *o += wv * x;
                                    }
                                } else {
                                    for (to, o) in orow.iter_mut().enumerate() {
                                        *o += wv * irow[to * st + kt];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

#[inline]
fn acc_row_3x3(out: &mut [f32], r0: &[f32], r1: &[f32], r2: &[f32], w: &[f32]) {
    let n = out.len();
    assert!(r0.len() >= n + 2 && r1.len() >= n + 2 && r2.len() >= n + 2 && w.len() >= 9);
    for t in 0..n {
        let s = w[0] * r0[t]
            + w[1] * r0[t + 1]
            + w[2] * r0[t + 2]
            + w[3] * r1[t]
            + w[4] * r1[t + 1]
            + w[5] * r1[t + 2]
            + w[6] * r2[t]
            + w[7] * r2[t + 1]
            + w[8] * r2[t + 2];
        out[t] += s;
    }
}

#[inline]
fn acc_row_4x4_s2(out: &mut [f32], rows: [&[f32]; 4], w: &[f32]) {
    let n = out.len();
    for r in rows {
        assert!(r.len() >= 2 * (n - 1) + 4);
    }
    assert!(w.len() >= 16);
    for to in 0..n {
        let i = 2 * to;
        let mut s = 0.0f32;
        for (kf, r) in rows.iter().enumerate() {
            s += w[4 * kf] * r[i]
                + w[4 * kf + 1] * r[i + 1]
                + w[4 * kf + 2] * r[i + 2]
                + w[4 * kf + 3] * r[i + 3];
        }
        out[to] += s;
    }
}

/// Transposed 2D convolution (adjoint of strided `conv2d` with zero padding).
/// `weight` is (in_ch, out_ch, k_freq, k_time). The raw output is
/// (in - 1) * stride + k per axis; callers trim for causality.
pub fn conv2d_transposed(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f32]>,
    stride: (usize, usize),
) -> Result<Tensor4> {
    let [ic, oc, kh, kw] = weight.shape();
    check_conv_args(input, weight, bias, 0, oc, stride)?;
    let (sf, st) = stride;
    let [b, _, fi_n, ti_n] = input.shape();
    let out_f = (fi_n - 1) * sf + kh;
    let out_t = (ti_n - 1) * st + kw;
    let mut out = Tensor4::zeros([b, oc, out_f, out_t]);
    let plane = out_f * out_t;
    let wdata = weight.data();

    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, obuf)| {
            let bi = idx / oc;
            let oci = idx % oc;
            if let Some(bv) = bias {
                obuf.fill(bv[oci]);
            }
            for ici in 0..ic {
                let wbase = ((ici * oc) + oci) * kh * kw;
                let w = &wdata[wbase..wbase + kh * kw];
                for fi in 0..fi_n {
                    let xrow = input.row(bi, ici, fi);
                    for kf in 0..kh {
                        let orow = &mut obuf[(fi * sf + kf) * out_t..(fi * sf + kf + 1) * out_t];
                        for kt in 0..kw {
                            let wv = w[kf * kw + kt];
                            if st == 1 {
                                for (x, o) in xrow.iter().zip(&mut orow[kt..kt + ti_n]) {
                                    *o += wv * x;
                                }
                            } else {
                                for (ti, x) in xrow.iter().enumerate() {
                                    orow[ti * st + kt] += wv * x;
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Per-frame statistics saved by the group-norm forward pass.
#[derive(Clone, Debug)]
pub struct GnStats {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
    pub groups: usize,
}

/// Group normalization restricted to each individual time frame: statistics
/// are taken per (batch, group, frame) over that group's channels and all
/// frequency bins, so no information crosses frames.
pub fn frame_group_norm(
    input: &Tensor4,
    num_groups: usize,
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> Result<Tensor4> {
    frame_group_norm_fwd(input, num_groups, gamma, beta, eps).map(|(o, _)| o)
}

pub(crate) fn frame_group_norm_fwd(
    input: &Tensor4,
    num_groups: usize,
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> Result<(Tensor4, GnStats)> {
    let [b, c, f, t] = input.shape();
    if num_groups == 0 || c % num_groups != 0 {
        return Err(Error::config(format!(
            "channels {c} not divisible by num_groups {num_groups}"
        )));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::config(format!(
            "gamma/beta length {}/{} != channels {c}",
            gamma.len(),
            beta.len()
        )));
    }
    let cpg = c / num_groups;
    let n = (cpg * f) as f32;
    let mut out = Tensor4::zeros([b, c, f, t]);
    let mut mean = vec![0.0f32; b * num_groups * t];
    let mut inv_std = vec![0.0f32; b * num_groups * t];

    for bi in 0..b {
        for g in 0..num_groups {
            let sbase = (bi * num_groups + g) * t;
            let mut sum = vec![0.0f32; t];
            let mut sumsq = vec![0.0f32; t];
            for ci in g * cpg..(g + 1) * cpg {
                for fi in 0..f {
                    let row = input.row(bi, ci, fi);
                    for ti in 0..t {
                        let v = row[ti];
                        sum[ti] += v;
                        sumsq[ti] += v * v;
                    }
                }
            }
            for ti in 0..t {
                let m = sum[ti] / n;
                let var = (sumsq[ti] / n - m * m).max(0.0);
                mean[sbase + ti] = m;
                inv_std[sbase + ti] = 1.0 / (var + eps).sqrt();
            }
            for ci in g * cpg..(g + 1) * cpg {
                let (ga, be) = (gamma[ci], beta[ci]);
                for fi in 0..f {
                    let src = input.row(bi, ci, fi);
                    let dst = out.row_mut(bi, ci, fi);
                    for ti in 0..t {
                        dst[ti] = (src[ti] - mean[sbase + ti]) * inv_std[sbase + ti] * ga + be;
                    }
                }
            }
        }
    }
    Ok((out, GnStats { mean, inv_std, groups: num_groups }))
}

/// Backward of `frame_group_norm`; returns (d_input, d_gamma, d_beta).
pub(crate) fn frame_group_norm_bwd(
    input: &Tensor4,
    grad_out: &Tensor4,
    stats: &GnStats,
    gamma: &[f32],
) -> (Tensor4, Vec<f32>, Vec<f32>) {
    let [b, c, f, t] = input.shape();
    let groups = stats.groups;
    let cpg = c / groups;
    let n = (cpg * f) as f32;
    let mut dx = Tensor4::zeros([b, c, f, t]);
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];

    for bi in 0..b {
        for g in 0..groups {
            let sbase = (bi * groups + g) * t;
            let mean = &stats.mean[sbase..sbase + t];
            let istd = &stats.inv_std[sbase..sbase + t];
            // s1[t] = sum of dxhat, s2[t] = sum of dxhat * xhat over the group
            let mut s1 = vec![0.0f32; t];
            let mut s2 = vec![0.0f32; t];
            for ci in g * cpg..(g + 1) * cpg {
                let ga = gamma[ci];
                for fi in 0..f {
                    let x = input.row(bi, ci, fi);
                    let dy = grad_out.row(bi, ci, fi);
                    for ti in 0..t {
                        let xhat = (x[ti] - mean[ti]) * istd[ti];
                        let dxh = dy[ti] * ga;
                        s1[ti] += dxh;
                        s2[ti] += dxh * xhat;
                        dgamma[ci] += dy[ti] * xhat;
                        dbeta[ci] += dy[ti];
                    }
                }
            }
            for ci in g * cpg..(g + 1) * cpg {
                let ga = gamma[ci];
                for fi in 0..f {
                    let x = input.row(bi, ci, fi);
                    let dy = grad_out.row(bi, ci, fi);
                    let dst = dx.row_mut(bi, ci, fi);
                    for ti in 0..t {
                        let xhat = (x[ti] - mean[ti]) * istd[ti];
                        let dxh = dy[ti] * ga;
                        dst[ti] = istd[ti] * (dxh - (s1[ti] + xhat * s2[ti]) / n);
                    }
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Sigmoid Linear Unit, x * sigmoid(x), elementwise.
pub fn silu(input: &Tensor4) -> Tensor4 {
    input.map(|x| x * sigmoid(x))
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu_backward(input: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(input.shape());
    for ((o, &x), &g) in out
        .data_mut()
        .iter_mut()
        .zip(input.data())
        .zip(grad_out.data())
    {
        let s = sigmoid(x);
        *o = g * s * (1.0 + x * (1.0 - s));
    }
    out
}

// ---- convolution backward kernels ----------------------------------------

pub(crate) fn conv2d_grad_bias(grad_out: &Tensor4) -> Vec<f32> {
    let [b, oc, f, t] = grad_out.shape();
    let mut db = vec![0.0f32; oc];
    for bi in 0..b {
        for oci in 0..oc {
            let mut acc = 0.0f32;
            for fi in 0..f {
                acc += sum8(grad_out.row(bi, oci, fi));
            }
            db[oci] += acc;
        }
    }
    let _ = t;
    db
}

pub(crate) fn conv2d_grad_weight(
    input: &Tensor4,
    grad_out: &Tensor4,
    weight_shape: [usize; 4],
    stride: (usize, usize),
    pad: Pad2d,
) -> Tensor4 {
    let [_, ic, kh, kw] = weight_shape;
    let (sf, st) = stride;
    let padded_store;
    let padded = if pad.is_zero() {
        input
    } else {
        padded_store = pad_input(input, pad);
        &padded_store
    };
    let [b, _, _, _] = padded.shape();
    let [_, _, out_f, out_t] = grad_out.shape();
    let mut dw = Tensor4::zeros(weight_shape);
    let per_oc = ic * kh * kw;

    dw.data_mut()
        .par_chunks_mut(per_oc)
        .enumerate()
        .for_each(|(oci, wslice)| {
            for ici in 0..ic {
                for kf in 0..kh {
                    for kt in 0..kw {
                        let mut acc = 0.0f32;
                        for bi in 0..b {
                            for fo in 0..out_f {
                                let g = grad_out.row(bi, oci, fo);
                                let x = padded.row(bi, ici, fo * sf + kf);
                                if st == 1 {
                                    acc += dot8(g, &x[kt..kt + out_t]);
                                } else {
                                    for (to, gv) in g.iter().enumerate() {
                                        acc += gv * x[to * st + kt];
                                    }
                                }
                            }
                        }
                        wslice[(ici * kh + kf) * kw + kt] = acc;
                    }
                }
            }
        });
    dw
}

pub(crate) fn conv2d_grad_input(
    input_shape: [usize; 4],
    weight: &Tensor4,
    grad_out: &Tensor4,
    stride: (usize, usize),
    pad: Pad2d,
) -> Tensor4 {
    let [oc, ic, kh, kw] = weight.shape();
    let (sf, st) = stride;
    let [b, _, f, t] = input_shape;
    let fp = f + pad.freq_lo + pad.freq_hi;
    let tp = t + pad.time_lo + pad.time_hi;
    let [_, _, out_f, out_t] = grad_out.shape();
    let mut dxp = Tensor4::zeros([b, ic, fp, tp]);
    let plane = fp * tp;
    let wdata = weight.data();

    dxp.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, xbuf)| {
            let bi = idx / ic;
            let ici = idx % ic;
            for oci in 0..oc {
                let wbase = ((oci * ic) + ici) * kh * kw;
                let w = &wdata[wbase..wbase + kh * kw];
                for fo in 0..out_f {
                    let g = grad_out.row(bi, oci, fo);
                    for kf in 0..kh {
                        let xrow = &mut xbuf[(fo * sf + kf) * tp..(fo * sf + kf + 1) * tp];
                        for kt in 0..kw {
                            let wv = w[kf * kw + kt];
                            if st == 1 {
                                for (x, gv) in xrow[kt..kt + out_t].iter_mut().zip(g) {
                                    *x += wv * gv;
                                }
                            } else {
                                for (to, gv) in g.iter().enumerate() {
                                    xrow[to * st + kt] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        });

    if pad.is_zero() {
        dxp
    } else {
        let mut dx = Tensor4::zeros(input_shape);
        for bi in 0..b {
            for ci in 0..ic {
                for fi in 0..f {
                    let src = dxp.offset(bi, ci, fi + pad.freq_lo, pad.time_lo);
                    let data = &dxp.data()[src..src + t];
                    dx.row_mut(bi, ci, fi).copy_from_slice(data);
                }
            }
        }
        dx
    }
}

pub(crate) fn conv2d_transposed_grad_input(
    input_shape: [usize; 4],
    weight: &Tensor4,
    grad_out: &Tensor4,
    stride: (usize, usize),
) -> Tensor4 {
    let [ic, oc, kh, kw] = weight.shape();
    let (sf, st) = stride;
    let [_, _, fi_n, ti_n] = input_shape;
    let mut dx = Tensor4::zeros(input_shape);
    let plane = fi_n * ti_n;
    let wdata = weight.data();

    dx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, xbuf)| {
            let bi = idx / ic;
            let ici = idx % ic;
            for oci in 0..oc {
                let wbase = ((ici * oc) + oci) * kh * kw;
                let w = &wdata[wbase..wbase + kh * kw];
                for fi in 0..fi_n {
                    let xrow = &mut xbuf[fi * ti_n..(fi + 1) * ti_n];
                    for kf in 0..kh {
                        let g = grad_out.row(bi, oci, fi * sf + kf);
                        for kt in 0..kw {
                            let wv = w[kf * kw + kt];
                            if st == 1 {
                                for (x, gv) in xrow.iter_mut().zip(&g[kt..kt + ti_n]) {
                                    *x += wv * gv;
                                }
                            } else {
                                for (ti, x) in xrow.iter_mut().enumerate() {
                                    *x += wv * g[ti * st + kt];
                                }
                            }
                        }
                    }
                }
            }
        });
    dx
}

pub(crate) fn conv2d_transposed_grad_weight(
    input: &Tensor4,
    grad_out: &Tensor4,
    weight_shape: [usize; 4],
    stride: (usize, usize),
) -> Tensor4 {
    let [_, oc, kh, kw] = weight_shape;
    let (sf, st) = stride;
    let [b, _, fi_n, ti_n] = input.shape();
    let mut dw = Tensor4::zeros(weight_shape);
    let per_ic = oc * kh * kw;

    dw.data_mut()
        .par_chunks_mut(per_ic)
        .enumerate()
        .for_each(|(ici, wslice)| {
            for oci in 0..oc {
                for kf in 0..kh {
                    for kt in 0..kw {
                        let mut acc = 0.0f32;
                        for bi in 0..b {
                            for fi in 0..fi_n {
                                let x = input.row(bi, ici, fi);
                                let g = grad_out.row(bi, oci, fi * sf + kf);
                                if st == 1 {
                                    acc += dot8(x, &g[kt..kt + ti_n]);
                                } else {
                                    for (ti, xv) in x.iter().enumerate() {
                                        acc += xv * g[ti * st + kt];
                                    }
                                }
                            }
                        }
                        wslice[(oci * kh + kf) * kw + kt] = acc;
                    }
                }
            }
        });
    dw
}

/// Fixed-association dot product (8 independent accumulators).
fn dot8(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let ar = ac.remainder();
    let br = bc.remainder();
    for (ca, cb) in ac.zip(bc) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ar.iter().zip(br) {
        s += x * y;
    }
    s
}

fn sum8(a: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ac = a.chunks_exact(8);
    let ar = ac.remainder();
    for ca in ac {
        for i in 0..8 {
            acc[i] += ca[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for x in ar {
        s += x;
    }
    s
}
