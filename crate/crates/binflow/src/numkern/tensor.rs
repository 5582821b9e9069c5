use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Dense rank-4 tensor with shape (batch, channels, freq_bins, time_frames),
/// row-major with the time axis contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("tensor dims must be >= 1, got {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::config(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        let numel = shape.iter().product();
        Tensor4 { shape, data: vec![0.0; numel] }
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Self {
        let numel = shape.iter().product();
        Tensor4 { shape, data: vec![value; numel] }
    }

    /// Standard-normal tensor; draw order is the flat element order.
    pub fn randn(shape: [usize; 4], rng: &mut impl Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        Tensor4 { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn freq(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, f: usize, t: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + f) * self.shape[3] + t
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, f: usize, t: usize) -> f32 {
        self.data[self.offset(b, c, f, t)]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, c: usize, f: usize, t: usize) -> &mut f32 {
        let i = self.offset(b, c, f, t);
        &mut self.data[i]
    }

    /// Contiguous time row at (b, c, f).
    #[inline]
    pub fn row(&self, b: usize, c: usize, f: usize) -> &[f32] {
        let start = self.offset(b, c, f, 0);
        &self.data[start..start + self.shape[3]]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize, f: usize) -> &mut [f32] {
        let start = self.offset(b, c, f, 0);
        let t = self.shape[3];
        &mut self.data[start..start + t]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f32) -> Tensor4 {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        if self.shape != other.shape {
            return Err(Error::config(format!(
                "add shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor4 { shape: self.shape, data })
    }

    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::config(format!(
                "add_assign shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// self += c * other
    pub fn add_scaled_assign(&mut self, other: &Tensor4, c: f32) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::config(format!(
                "add_scaled_assign shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor4) -> Result<Tensor4> {
        if self.shape != other.shape {
            return Err(Error::config(format!(
                "sub shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Tensor4 { shape: self.shape, data })
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(&self, other: &Tensor4) -> Result<Tensor4> {
        let [b, c1, f, t] = self.shape;
        let [b2, c2, f2, t2] = other.shape;
        if (b, f, t) != (b2, f2, t2) {
            return Err(Error::config(format!(
                "concat_channels mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor4::zeros([b, c1 + c2, f, t]);
        let plane = f * t;
        for bi in 0..b {
            for ci in 0..c1 {
                let src = self.offset(bi, ci, 0, 0);
                let dst = out.offset(bi, ci, 0, 0);
                out.data[dst..dst + plane].copy_from_slice(&self.data[src..src + plane]);
            }
            for ci in 0..c2 {
                let src = other.offset(bi, ci, 0, 0);
                let dst = out.offset(bi, c1 + ci, 0, 0);
                out.data[dst..dst + plane].copy_from_slice(&other.data[src..src + plane]);
            }
        }
        Ok(out)
    }

    /// Concatenate along the time axis (`self` first).
    pub fn concat_time(&self, other: &Tensor4) -> Result<Tensor4> {
        let [b, c, f, t1] = self.shape;
        let [b2, c2, f2, t2] = other.shape;
        if (b, c, f) != (b2, c2, f2) {
            return Err(Error::config(format!(
                "concat_time mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor4::zeros([b, c, f, t1 + t2]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..f {
                    let dst = out.offset(bi, ci, fi, 0);
                    out.data[dst..dst + t1].copy_from_slice(self.row(bi, ci, fi));
                    out.data[dst + t1..dst + t1 + t2].copy_from_slice(other.row(bi, ci, fi));
                }
            }
        }
        Ok(out)
    }

    /// Zero-pad the frequency axis by `lo` bins below and `hi` above.
    pub fn pad_freq(&self, lo: usize, hi: usize) -> Tensor4 {
        let [b, c, f, t] = self.shape;
        let mut out = Tensor4::zeros([b, c, f + lo + hi, t]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..f {
                    let dst = out.offset(bi, ci, fi + lo, 0);
                    out.data[dst..dst + t].copy_from_slice(self.row(bi, ci, fi));
                }
            }
        }
        out
    }

    pub fn slice_freq(&self, start: usize, len: usize) -> Result<Tensor4> {
        let [b, c, f, t] = self.shape;
        if start + len > f {
            return Err(Error::config(format!(
                "slice_freq [{start}, {}) out of {f} bins",
                start + len
            )));
        }
        let mut out = Tensor4::zeros([b, c, len, t]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..len {
                    let src = self.offset(bi, ci, start + fi, 0);
                    let dst = out.offset(bi, ci, fi, 0);
                    out.data[dst..dst + t].copy_from_slice(&self.data[src..src + t]);
                }
            }
        }
        Ok(out)
    }

    pub fn slice_time(&self, start: usize, len: usize) -> Result<Tensor4> {
        let [b, c, f, t] = self.shape;
        if start + len > t {
            return Err(Error::config(format!(
                "slice_time [{start}, {}) out of {t} frames",
                start + len
            )));
        }
        let mut out = Tensor4::zeros([b, c, f, len]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..f {
                    let src = self.offset(bi, ci, fi, start);
                    let dst = out.offset(bi, ci, fi, 0);
                    out.data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
                }
            }
        }
        Ok(out)
    }

    /// Keep every second time frame starting at index 0.
    pub fn time_stride2(&self) -> Tensor4 {
        let [b, c, f, t] = self.shape;
        let to = t.div_ceil(2);
        let mut out = Tensor4::zeros([b, c, f, to]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..f {
                    let src = self.row(bi, ci, fi);
                    let dst = out.row_mut(bi, ci, fi);
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d = src[2 * i];
                    }
                }
            }
        }
        out
    }
}
