//! Slow f64 reference kernels and finite-difference checking.
//!
//! These are the independent oracles the test suites compare the fast f32
//! kernels and the tape gradients against. They share no code with the
//! production paths: plain nested loops, f64 throughout.

use super::{Pad2d, Tensor4};

#[derive(Clone, Debug)]
pub struct RefTensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl RefTensor {
    pub fn from_t4(t: &Tensor4) -> Self {
        RefTensor {
            shape: t.shape(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        RefTensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, f: usize, t: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + f) * self.shape[3] + t
    }

    pub fn at(&self, b: usize, c: usize, f: usize, t: usize) -> f64 {
        self.data[self.idx(b, c, f, t)]
    }
}

/// Padded lookup: out-of-range reads are zero.
fn padded_at(x: &RefTensor, b: usize, c: usize, f: isize, t: isize) -> f64 {
    if f < 0 || t < 0 || f as usize >= x.shape[2] || t as usize >= x.shape[3] {
        0.0
    } else {
        x.at(b, c, f as usize, t as usize)
    }
}

pub fn ref_conv2d(
    x: &RefTensor,
    w: &RefTensor,
    bias: Option<&[f64]>,
    stride: (usize, usize),
    pad: Pad2d,
) -> RefTensor {
    let [b, ic, fi, ti] = x.shape;
    let [oc, _, kh, kw] = w.shape;
    let (sf, st) = stride;
    let out_f = (fi + pad.freq_lo + pad.freq_hi - kh) / sf + 1;
    let out_t = (ti + pad.time_lo + pad.time_hi - kw) / st + 1;
    let mut out = RefTensor::zeros([b, oc, out_f, out_t]);
    for bi in 0..b {
        for o in 0..oc {
            for fo in 0..out_f {
                for to in 0..out_t {
                    let mut acc = bias.map_or(0.0, |bv| bv[o]);
                    for i in 0..ic {
                        for kf in 0..kh {
                            for kt in 0..kw {
                                let fsrc = (fo * sf + kf) as isize - pad.freq_lo as isize;
                                let tsrc = (to * st + kt) as isize - pad.time_lo as isize;
                                acc += w.at(o, i, kf, kt) * padded_at(x, bi, i, fsrc, tsrc);
                            }
                        }
                    }
                    let oi = out.idx(bi, o, fo, to);
                    out.data[oi] = acc;
                }
            }
        }
    }
    out
}

pub fn ref_conv2d_transposed(
    x: &RefTensor,
    w: &RefTensor,
    bias: Option<&[f64]>,
    stride: (usize, usize),
) -> RefTensor {
    let [b, ic, fi, ti] = x.shape;
    let [_, oc, kh, kw] = w.shape;
    let (sf, st) = stride;
    let out_f = (fi - 1) * sf + kh;
    let out_t = (ti - 1) * st + kw;
    let mut out = RefTensor::zeros([b, oc, out_f, out_t]);
    for bi in 0..b {
        for o in 0..oc {
            if let Some(bv) = bias {
                let start = out.idx(bi, o, 0, 0);
                for v in &mut out.data[start..start + out_f * out_t] {
                    *v = bv[o];
                }
            }
            for i in 0..ic {
                for f in 0..fi {
                    for t in 0..ti {
                        let xv = x.at(bi, i, f, t);
                        for kf in 0..kh {
                            for kt in 0..kw {
                                let oi = out.idx(bi, o, f * sf + kf, t * st + kt);
                                out.data[oi] += w.at(i, o, kf, kt) * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn ref_frame_group_norm(
    x: &RefTensor,
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> RefTensor {
    let [b, c, f, t] = x.shape;
    let cpg = c / groups;
    let n = (cpg * f) as f64;
    let mut out = RefTensor::zeros(x.shape);
    for bi in 0..b {
        for g in 0..groups {
            for ti in 0..t {
                let mut mean = 0.0;
                for ci in g * cpg..(g + 1) * cpg {
                    for fi in 0..f {
                        mean += x.at(bi, ci, fi, ti);
                    }
                }
                mean /= n;
                let mut var = 0.0;
                for ci in g * cpg..(g + 1) * cpg {
                    for fi in 0..f {
                        let d = x.at(bi, ci, fi, ti) - mean;
                        var += d * d;
                    }
                }
                var /= n;
                let istd = 1.0 / (var + eps).sqrt();
                for ci in g * cpg..(g + 1) * cpg {
                    for fi in 0..f {
                        let oi = out.idx(bi, ci, fi, ti);
                        out.data[oi] = (x.at(bi, ci, fi, ti) - mean) * istd * gamma[ci] + beta[ci];
                    }
                }
            }
        }
    }
    out
}

pub fn ref_silu(x: &RefTensor) -> RefTensor {
    RefTensor {
        shape: x.shape,
        data: x.data.iter().map(|&v| v / (1.0 + (-v).exp())).collect(),
    }
}

/// Central finite-difference gradient of `scalar_fn` at `point`.
/// `scalar_fn` must evaluate the target loss in f64 via the reference kernels.
pub fn central_difference(
    point: &[f32],
    eps: f64,
    mut scalar_fn: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let base: Vec<f64> = point.iter().map(|&v| v as f64).collect();
    let mut grad = vec![0.0; base.len()];
    let mut work = base.clone();
    for i in 0..base.len() {
        work[i] = base[i] + eps;
        let up = scalar_fn(&work);
        work[i] = base[i] - eps;
        let down = scalar_fn(&work);
        work[i] = base[i];
        grad[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Relative comparison used by the gradient checks: passes when
/// |a - b| <= tol * max(|a|, |b|, scale).
pub fn close_rel(a: f64, b: f64, tol: f64, scale: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale)
}
